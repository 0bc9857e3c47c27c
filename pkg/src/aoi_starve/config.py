"""Parameter types, validation and the flat ``key=value`` config format."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Union

ATTACK_MODES = ("off", "probabilistic", "active_eve")
RAW_CHOICES_M = (50.0, 150.0, 300.0)


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration values."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class SpsParams:
    delta_ms: float = 1.0
    gamma: int = 100
    m_subchannels: int = 5
    k_contiguous: int = 1
    p_keep: float = 0.4
    rc_min: int = 5
    rc_max: int = 15
    p_sch: float = 1.0
    phi: float = 1.0
    sensing_threshold_dbm: float = -126.0
    raw_m: float = 150.0

    @property
    def rri_ms(self) -> float:
        return self.gamma * self.delta_ms

    @property
    def selectable_per_subframe(self) -> int:
        return self.m_subchannels - self.k_contiguous + 1

    @property
    def total_selectable(self) -> int:
        return self.gamma * self.selectable_per_subframe

    @property
    def sensing_range_m(self) -> float:
        # reach of the reservation sensing: any two transmitters audible at a
        # common receiver inside RAW are at most 2*RAW apart
        return 2.0 * self.raw_m


@dataclass(frozen=True)
class ScenarioParams:
    n_vehicles: int = 100
    density_per_km: float = 100.0
    lanes: int = 3
    speed_kmh: float = 70.0

    @property
    def road_length_m(self) -> float:
        return 1000.0 * self.n_vehicles / self.density_per_km


@dataclass(frozen=True)
class AttackParams:
    x: float = 0.0
    mode: str = "off"
    eve_rri_ms: float = 1.0

    @property
    def effective_x(self) -> float:
        return 0.0 if self.mode == "off" else self.x


@dataclass(frozen=True)
class Csr:
    """A candidate resource: one subframe offset and ``width`` contiguous subchannels."""

    subframe_offset: int
    subchannel_start: int
    width: int = 1

    def overlaps(self, other: "Csr") -> bool:
        if self.subframe_offset != other.subframe_offset:
            return False
        return (self.subchannel_start < other.subchannel_start + other.width
                and other.subchannel_start < self.subchannel_start + self.width)


# Per-vehicle SPS state, one variant at a time.

@dataclass(frozen=True)
class Idle:
    ms_in_idle: int = 0


@dataclass(frozen=True)
class Wait:
    w: int


@dataclass(frozen=True)
class Active:
    rc: int
    tau: int
    csr: Csr


UeState = Union[Idle, Wait, Active]


@dataclass(frozen=True)
class Config:
    sps: SpsParams = field(default_factory=SpsParams)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    attack: AttackParams = field(default_factory=AttackParams)
    seed: int = 1
    sim_duration_ms: int = 1_000_000

    @property
    def gamma(self) -> int:
        return self.sps.gamma

    @property
    def road_length_m(self) -> float:
        return self.scenario.road_length_m

    @property
    def duration_subframes(self) -> int:
        return int(round(self.sim_duration_ms / self.sps.delta_ms))

    @property
    def eve_rri_subframes(self) -> int:
        return int(round(self.attack.eve_rri_ms / self.sps.delta_ms))

    def with_updates(self, **kw) -> "Config":
        """Return a validated copy with flat config keys replaced."""
        flat = to_flat(self)
        for key, value in kw.items():
            if key not in _FLAT_KEYS:
                raise ConfigError(key, "unknown config key")
            flat[key] = value
        return from_flat(flat)


# --------------------------------------------------------------------------
# validation

def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(name, msg)


def _finite(v: float) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def validate_params(sps: SpsParams, scen: ScenarioParams, atk: AttackParams,
                    seed: int = 1, sim_duration_ms: int = 1_000_000) -> Config:
    """Check every invariant and return an immutable :class:`Config`.

    Raises :class:`ConfigError` naming the first offending field.
    """
    _check(_finite(sps.delta_ms) and sps.delta_ms > 0, "delta_ms", "must be > 0")
    _check(int(sps.gamma) == sps.gamma and sps.gamma >= 1, "gamma", "must be an integer >= 1")
    _check(int(sps.m_subchannels) == sps.m_subchannels and sps.m_subchannels >= 1,
           "m_subchannels", "must be an integer >= 1")
    _check(int(sps.k_contiguous) == sps.k_contiguous
           and 1 <= sps.k_contiguous <= sps.m_subchannels,
           "k_contiguous", "must satisfy 1 <= k_contiguous <= m_subchannels")
    _check(_finite(sps.p_keep) and 0.0 <= sps.p_keep <= 1.0, "p_keep", "must lie in [0, 1]")
    _check(int(sps.rc_min) == sps.rc_min and sps.rc_min >= 1, "rc_min", "must be an integer >= 1")
    _check(int(sps.rc_max) == sps.rc_max and sps.rc_max >= sps.rc_min,
           "rc_max", "must be an integer >= rc_min")
    _check(_finite(sps.p_sch) and 0.0 < sps.p_sch <= 1.0, "p_sch", "must lie in (0, 1]")
    _check(_finite(sps.phi) and 0.0 < sps.phi <= 1.0, "phi", "must lie in (0, 1]")
    _check(_finite(sps.sensing_threshold_dbm), "sensing_threshold_dbm", "must be finite")
    _check(sps.raw_m in RAW_CHOICES_M, "raw_m", f"must be one of {RAW_CHOICES_M}")

    _check(int(scen.n_vehicles) == scen.n_vehicles and scen.n_vehicles >= 1,
           "n_vehicles", "must be an integer >= 1")
    _check(_finite(scen.density_per_km) and scen.density_per_km > 0, "density_per_km", "must be > 0")
    _check(int(scen.lanes) == scen.lanes and scen.lanes >= 1, "lanes", "must be an integer >= 1")
    _check(_finite(scen.speed_kmh) and scen.speed_kmh >= 0, "speed_kmh", "must be >= 0")

    _check(atk.mode in ATTACK_MODES, "attack_mode", f"must be one of {ATTACK_MODES}")
    _check(_finite(atk.x) and 0.0 <= atk.x <= 1.0, "attack_x", "must lie in [0, 1]")
    _check(_finite(atk.eve_rri_ms) and atk.eve_rri_ms >= 1, "eve_rri_ms", "must be >= 1")
    eve_sf = atk.eve_rri_ms / sps.delta_ms
    _check(abs(eve_sf - round(eve_sf)) < 1e-9, "eve_rri_ms", "must be a whole number of subframes")
    if atk.mode == "active_eve":
        max_x = 1.0 / round(eve_sf)
        _check(atk.x <= max_x + 1e-12, "attack_x",
               f"unachievable with eve_rri_ms={atk.eve_rri_ms:g}; max achievable fraction is {max_x:.6g}")

    _check(int(seed) == seed and 0 <= seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    _check(int(sim_duration_ms) == sim_duration_ms and sim_duration_ms >= 0,
           "sim_duration_ms", "must be an integer >= 0")

    sps = replace(sps, gamma=int(sps.gamma), m_subchannels=int(sps.m_subchannels),
                  k_contiguous=int(sps.k_contiguous), rc_min=int(sps.rc_min), rc_max=int(sps.rc_max),
                  delta_ms=float(sps.delta_ms), p_keep=float(sps.p_keep), p_sch=float(sps.p_sch),
                  phi=float(sps.phi), sensing_threshold_dbm=float(sps.sensing_threshold_dbm),
                  raw_m=float(sps.raw_m))
    scen = replace(scen, n_vehicles=int(scen.n_vehicles), lanes=int(scen.lanes),
                   density_per_km=float(scen.density_per_km), speed_kmh=float(scen.speed_kmh))
    atk = replace(atk, x=float(atk.x), eve_rri_ms=float(atk.eve_rri_ms))
    return Config(sps=sps, scenario=scen, attack=atk, seed=int(seed),
                  sim_duration_ms=int(sim_duration_ms))


def default_config(**kw) -> Config:
    """Reference defaults, optionally overridden with flat config keys."""
    cfg = validate_params(SpsParams(), ScenarioParams(), AttackParams())
    return cfg.with_updates(**kw) if kw else cfg


# --------------------------------------------------------------------------
# flat key=value format

_SPS_KEYS = tuple(f.name for f in fields(SpsParams))
_SCEN_KEYS = tuple(f.name for f in fields(ScenarioParams))
_ATK_KEYS = {"attack_mode": "mode", "attack_x": "x", "eve_rri_ms": "eve_rri_ms"}
_FLAT_KEYS = _SPS_KEYS + _SCEN_KEYS + tuple(_ATK_KEYS) + ("seed", "sim_duration_ms")

_INT_KEYS = {"gamma", "m_subchannels", "k_contiguous", "rc_min", "rc_max",
             "n_vehicles", "lanes", "seed", "sim_duration_ms"}
_STR_KEYS = {"attack_mode"}


def to_flat(cfg: Config) -> dict:
    flat = asdict(cfg.sps)
    flat.update(asdict(cfg.scenario))
    flat.update({k: getattr(cfg.attack, a) for k, a in _ATK_KEYS.items()})
    flat["seed"] = cfg.seed
    flat["sim_duration_ms"] = cfg.sim_duration_ms
    return flat


def from_flat(flat: dict) -> Config:
    unknown = sorted(set(flat) - set(_FLAT_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown config key")
    sps = SpsParams(**{k: flat[k] for k in _SPS_KEYS if k in flat})
    scen = ScenarioParams(**{k: flat[k] for k in _SCEN_KEYS if k in flat})
    atk_kw = {a: flat[k] for k, a in _ATK_KEYS.items() if k in flat}
    if "mode" in atk_kw:
        atk_kw["mode"] = str(atk_kw["mode"]).replace("-", "_")
    atk = AttackParams(**atk_kw)
    return validate_params(sps, scen, atk, seed=flat.get("seed", 1),
                           sim_duration_ms=flat.get("sim_duration_ms", 1_000_000))


def _coerce(key: str, raw: str):
    if key in _STR_KEYS:
        return raw
    try:
        if key in _INT_KEYS:
            return int(raw, 0)
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse value {raw!r}") from None


def parse_config(text: str) -> Config:
    """Parse the flat ``key=value`` format (``#`` comments, blank lines allowed)."""
    flat: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FLAT_KEYS:
            raise ConfigError(key, "unknown config key")
        if key in flat:
            raise ConfigError(key, "duplicate key")
        flat[key] = _coerce(key, raw)
    return from_flat(flat)


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: Config) -> str:
    flat = to_flat(cfg)
    return "".join(f"{k}={_fmt(flat[k])}\n" for k in _FLAT_KEYS)


def config_hash(cfg: Config) -> str:
    """Stable short digest of every semantically meaningful field."""
    flat = to_flat(cfg)
    if cfg.attack.mode == "off":
        # x and eve cadence are inert without an adversary
        flat["attack_x"] = 0.0
        flat["eve_rri_ms"] = 1.0
    canon = "".join(f"{k}={_fmt(flat[k])}\n" for k in _FLAT_KEYS)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]
