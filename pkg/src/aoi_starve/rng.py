"""Counter-based random streams.

Every draw is a pure function of ``(key, counter)``, where the key is derived
from ``(root_seed, entity_id, purpose_tag)``.  Nothing is consumed
sequentially, so adding a vehicle or changing an unrelated parameter never
shifts another entity's draws.  The mixer is SplitMix64's finalizer, which is
a bijection on 64-bit words; the same integer recipe is used inside the
compiled kernels, so both simulation paths agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0

PURPOSE_BITS = 8

# purpose tags
P_IDLE = 1
P_CSR = 2
P_RC = 3
P_KEEP = 4
P_PHY = 5
P_PLACE = 6
P_REPLICA = 7
P_MC = 8

PAIR_SHIFT = 20  # pair entity id = tx << 20 | rx


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (wraps to 64 bits)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_key(root_seed: int, stream_id: int) -> int:
    return mix64(mix64(root_seed + GOLDEN) ^ mix64(stream_id))


def stream_id_of(entity_id: int, purpose_tag: int) -> int:
    if not 0 <= purpose_tag < (1 << PURPOSE_BITS):
        raise ValueError(f"purpose_tag out of range: {purpose_tag}")
    if not 0 <= entity_id < (1 << (64 - PURPOSE_BITS)):
        raise ValueError(f"entity_id out of range: {entity_id}")
    return (entity_id << PURPOSE_BITS) | purpose_tag


def stream_keys(root_seed: int, entity_ids, purpose_tag: int) -> np.ndarray:
    """Vectorized :func:`stream_key` over many entities sharing one purpose."""
    ent = np.asarray(entity_ids, dtype=np.uint64)
    sid = (ent << np.uint64(PURPOSE_BITS)) | np.uint64(purpose_tag)
    root = np.uint64(mix64(root_seed + GOLDEN))
    return mix64_array(root ^ mix64_array(sid))


def uniform(keys, ctrs) -> np.ndarray:
    """Uniform doubles in [0, 1) for paired key/counter arrays."""
    k = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(ctrs).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = mix64_array(k + (c + np.uint64(1)) * np.uint64(GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


@dataclass(frozen=True)
class Rng:
    """One independent substream; ``draw(i)`` is the i-th value of the stream."""

    seed: int
    stream_id: int

    @property
    def key(self) -> int:
        return stream_key(self.seed, self.stream_id)

    def draw(self, index: int) -> float:
        z = mix64(self.key + ((index + 1) * GOLDEN))
        return (z >> 11) * _INV53

    def draws(self, n: int, start: int = 0) -> np.ndarray:
        ctr = np.arange(start, start + n, dtype=np.uint64)
        return uniform(np.full(n, self.key, dtype=np.uint64), ctr)

    def integers(self, low: int, high: int, n: int, start: int = 0) -> np.ndarray:
        """Integers uniform on ``[low, high]`` (inclusive)."""
        return low + (self.draws(n, start) * (high - low + 1)).astype(np.int64)


def derive_substream(root_seed: int, entity_id: int, purpose_tag: int) -> Rng:
    """Map ``(root_seed, entity_id, purpose_tag)`` to its own stream.

    For a fixed root seed the map is injective: the stream id packs entity and
    purpose losslessly and the key is a bijection of the stream id.
    """
    if not 0 <= root_seed < (1 << 64):
        raise ValueError("root_seed must be an unsigned 64-bit integer")
    return Rng(int(root_seed), stream_id_of(int(entity_id), int(purpose_tag)))


def replica_seed(root_seed: int, replica: int) -> int:
    return derive_substream(root_seed, replica, P_REPLICA).key
