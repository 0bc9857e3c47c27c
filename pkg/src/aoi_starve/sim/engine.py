"""Run orchestration and the event-level public API of the simulator."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..accel import use_numba
from ..config import Config, Csr, SpsParams
from . import _kernel_np as knp
from .world import (
    COLLISION, EV_TX, F_P_IDLE, HALF_DUPLEX, I_EVE_ON, NEVER, OK, OUT_OF_RANGE,
    OUTCOME_NAMES, PHY_LOSS, S_LOG_N, SimOptions, World, init_world,
)


@dataclass(frozen=True)
class TxEvent:
    tx_id: int
    gen_time_ms: float
    tx_time_ms: float
    csr: Csr


@dataclass(frozen=True)
class RxEvent:
    tx_id: int
    rx_id: int
    gen_time_ms: float
    rx_time_ms: float
    outcome: str


@dataclass
class RunResult:
    world: World
    backend: str
    wall_s: float

    @property
    def cfg(self) -> Config:
        return self.world.cfg


def _advance(w: World, t_stop: int, backend: str) -> None:
    if t_stop <= w.t_next:
        return
    if backend == "numba":
        from ._kernel_nb import run_kernel
        run_kernel(w.t_next, t_stop, *w.kernel_args())
    else:
        knp.run_range(w, w.t_next, t_stop)
    w.t_next = t_stop


def run(cfg: Config, duration_ms: float | None = None, seed: int | None = None,
        opts: SimOptions | None = None, backend: str | None = None) -> RunResult:
    """Simulate ``duration_ms`` (default: the config's horizon) from an all-Idle start."""
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
    backend = backend or ("numba" if use_numba() else "numpy")
    w = init_world(cfg, opts, duration_ms)
    t0 = time.perf_counter()
    _advance(w, w.horizon, backend)
    return RunResult(w, backend, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# fine-grained operations (numpy path; used for inspection and tests)

def _csr_of(w: World, u: int) -> Csr:
    return Csr(int(w.hold_sf[u]), int(w.hold_sc[u]), int(w.cfg.sps.k_contiguous))


def step_subframe(w: World, t: int | None = None) -> list[TxEvent]:
    """Advance the world by one subframe and return the transmissions it produced."""
    t = w.t_next if t is None else t
    if t != w.t_next:
        raise ValueError(f"world is at subframe {w.t_next}, cannot step {t}")
    nxt = w.next_tx.copy()
    ages = w.age.copy()
    sfs, scs = w.hold_sf.copy(), w.hold_sc.copy()
    txl = knp.step(w, t)
    w.t_next = t + 1
    d = w.cfg.sps.delta_ms
    k = w.cfg.sps.k_contiguous
    out = []
    for u in txl:
        assert nxt[u] == t
        out.append(TxEvent(int(u), (t + 1 - ages[u]) * d, t * d, Csr(int(sfs[u]), int(scs[u]), k)))
    return out


def sense_and_select(w: World, u: int, t: int | None = None) -> Csr | None:
    """Run one Idle attempt for UE ``u`` without committing it.

    Returns the chosen :class:`Csr` or ``None`` (``not_found`` or the
    Bernoulli attempt did not fire).  The world is left untouched.
    """
    t = w.t_next if t is None else t
    if not w.is_idle(u):
        raise ValueError(f"UE {u} is not Idle")
    if not rng.uniform([w.k_idle[u]], [t])[0] < w.fp[F_P_IDLE]:
        return None
    probe = w.copy()
    pick = knp.select(probe, u, t)
    if pick is None:
        return None
    return Csr(int(pick[0]), int(pick[1]), int(w.cfg.sps.k_contiguous))


def eve_step(w: World, t: int) -> int:
    """Apply one adversary announcement at subframe ``t``; returns units claimed."""
    if not w.ip[I_EVE_ON]:
        return 0
    return knp.eve_step(w, t)


def ue_state(w: World, u: int, t: int | None = None):
    """Current SPS state of UE ``u`` as an Idle / Wait / Active value."""
    from ..config import Active, Idle, Wait
    t = w.t_next if t is None else t
    if w.next_tx[u] == NEVER:
        return Idle(max(0, t - int(w.idle_since[u])))
    g = w.gamma
    left = int(w.next_tx[u]) - t  # subframes until the next transmission
    if left >= g:
        return Wait(left - g)
    return Active(int(w.rc[u]), left, _csr_of(w, u))


def resolve_receptions(tx_events, positions, sps: SpsParams, seed: int, *,
                       abstract_phy: bool = False, half_duplex: bool = True,
                       include_out_of_range: bool = False) -> list[RxEvent]:
    """Outcomes of every (tx, rx) pair for one subframe's transmissions.

    ``positions`` is an ``(N, 2)`` array of metres.  PHY draws use the same
    per-pair streams as the engine, so results match the engine's log.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    raw2 = sps.raw_m * sps.raw_m
    txs = list(tx_events)
    transmitting = {e.tx_id for e in txs}
    out = []
    for e in txs:
        t = int(round(e.tx_time_ms / sps.delta_ms))
        for r in range(n):
            if r == e.tx_id:
                continue
            dx, dy = pos[e.tx_id] - pos[r]
            if dx * dx + dy * dy > raw2:
                if include_out_of_range:
                    out.append(RxEvent(e.tx_id, r, e.gen_time_ms, e.tx_time_ms + sps.delta_ms,
                                       OUTCOME_NAMES[OUT_OF_RANGE]))
                continue
            code = -1
            if not abstract_phy:
                if half_duplex and r in transmitting:
                    code = HALF_DUPLEX
                else:
                    for o in txs:
                        if o is e or not o.csr.overlaps(e.csr):
                            continue
                        ox, oy = pos[o.tx_id] - pos[r]
                        if ox * ox + oy * oy <= raw2:
                            code = COLLISION
                            break
            if code < 0:
                key = rng.stream_key(seed, rng.stream_id_of((e.tx_id << rng.PAIR_SHIFT) | r, rng.P_PHY))
                draw = rng.uniform([key], [t])[0]
                code = OK if draw < sps.phi else PHY_LOSS
            out.append(RxEvent(e.tx_id, r, e.gen_time_ms, e.tx_time_ms + sps.delta_ms, OUTCOME_NAMES[code]))
    return out


def event_rows(w: World) -> np.ndarray:
    """Logged events (possibly truncated at the log capacity)."""
    return w.log[: int(w.stats[S_LOG_N])]


def tx_events_from_log(w: World) -> list[TxEvent]:
    rows = event_rows(w)
    d = w.cfg.sps.delta_ms
    k = w.cfg.sps.k_contiguous
    return [TxEvent(int(r[1]), r[3] * d, r[4] * d, Csr(int(r[5]), int(r[6]), k))
            for r in rows if r[0] == EV_TX]
