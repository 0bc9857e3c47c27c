"""Simulation state: flat numpy arrays shared by the compiled and numpy paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .. import rng
from ..config import Config, ConfigError

NEVER = np.int64(1) << np.int64(62)
HIST_BINS = 65536  # reset histogram, last bin is overflow
LANE_WIDTH_M = 3.5
DEFAULT_THRESHOLDS_MS = (100.0, 120.0, 400.0)

# outcome codes
OK, COLLISION, PHY_LOSS, HALF_DUPLEX, OUT_OF_RANGE = 0, 1, 2, 3, 4
OUTCOME_NAMES = ("ok", "collision", "phy_loss", "half_duplex", "out_of_range")

# event log columns: type, tx_id, rx_id, gen, time, subframe, subchannel, outcome
EV_TX, EV_RX = 0, 1

# stats vector layout
(S_TX, S_OK, S_COLL, S_PHY, S_HD, S_OOR, S_ATTEMPT, S_EXIT, S_NOTFOUND,
 S_KEEPDEC, S_KEEP, S_AVAIL_FREE, S_AVAIL_TOTAL, S_LOG_N, S_LOG_DROP,
 S_PASSAGE_SUM, S_PASSAGE_N, S_RESET_N, S_RLOG_N, S_RLOG_DROP, S_EVE_CLAIMS) = range(21)
N_STATS = 21

# int parameter vector layout
(I_T, I_WARM, I_G, I_M, I_K, I_RCMIN, I_RCMAX, I_EVE_MODE, I_ABSTRACT, I_HD,
 I_EVE_R, I_Q, I_RING, I_N, I_S1, I_HCAP, I_EVE_ON, I_LOGCAP, I_RLOGCAP, I_NTHR,
 I_EVE_T0) = range(21)
N_IPARAMS = 21

# float parameter vector layout
F_P_IDLE, F_P_KEEP, F_PHI, F_RAW2, F_SENSE2, F_ROAD = range(6)
N_FPARAMS = 6

PROBE_TRIES = 32


@dataclass(frozen=True)
class SimOptions:
    """Engine switches that are not part of the config file."""

    abstract_phy: bool = False
    half_duplex: bool = True
    drift: bool = False
    warmup_ms: float | None = None  # default 10 * RRI
    thresholds_ms: tuple = DEFAULT_THRESHOLDS_MS
    log_capacity: int = 0
    reset_log_capacity: int = 0


@dataclass
class World:
    ip: np.ndarray
    fp: np.ndarray
    thr: np.ndarray
    # positions
    x0: np.ndarray
    y: np.ndarray
    vel: np.ndarray
    # per-UE streams
    k_idle: np.ndarray
    k_csr: np.ndarray
    k_rc: np.ndarray
    k_keep: np.ndarray
    k_phy: np.ndarray
    # per-UE SPS state
    next_tx: np.ndarray
    idle_since: np.ndarray
    rc: np.ndarray
    hold_sf: np.ndarray
    hold_sc: np.ndarray
    age: np.ndarray
    anchor: np.ndarray
    ctr_csr: np.ndarray
    ctr_rc: np.ndarray
    ctr_keep: np.ndarray
    since_dec: np.ndarray
    # reservation map
    eve_until: np.ndarray
    occ: np.ndarray
    holders: np.ndarray
    eve_ptr: np.ndarray
    # per-pair AoI accumulators
    last_rx: np.ndarray
    last_reset: np.ndarray
    pend: np.ndarray
    pend_gen: np.ndarray
    area2: np.ndarray
    obs: np.ndarray
    nrx: np.ndarray
    tcount: np.ndarray
    # aggregates and logs
    reset_hist: np.ndarray
    reset_le: np.ndarray
    reset_sum: np.ndarray
    rc_hist: np.ndarray
    stats: np.ndarray
    log: np.ndarray
    rlog: np.ndarray
    t_next: int = 0  # first subframe not yet simulated
    cfg: Config | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return int(self.ip[I_N])

    @property
    def gamma(self) -> int:
        return int(self.ip[I_G])

    @property
    def horizon(self) -> int:
        return int(self.ip[I_T])

    @property
    def warmup(self) -> int:
        return int(self.ip[I_WARM])

    def array_fields(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)}

    def kernel_args(self) -> tuple:
        return tuple(getattr(self, name) for name in KERNEL_FIELDS)

    def copy(self) -> "World":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for k, v in kw.items():
            if isinstance(v, np.ndarray):
                kw[k] = v.copy()
        return World(**kw)

    def positions_at(self, t: int) -> np.ndarray:
        return positions_x(self.x0, self.vel, t, self.fp[F_ROAD], bool(self.ip[I_RING]))

    def is_idle(self, u: int) -> bool:
        return self.next_tx[u] == NEVER


KERNEL_FIELDS = tuple(f.name for f in fields(World) if f.name not in ("t_next", "cfg"))


def positions_x(x0, vel, t, road, ring):
    if not ring:
        return x0
    return (x0 + vel * (t * 0.001)) % road


def eve_quota(cfg: Config) -> int:
    """Subchannel units Eve claims per full rotation of the grid."""
    r = cfg.eve_rri_subframes
    return int(round(cfg.attack.x * r * cfg.sps.m_subchannels * cfg.sps.gamma))


def holder_capacity(cfg: Config, drift: bool) -> int:
    n = cfg.scenario.n_vehicles
    if drift:
        return n
    # holders of one unit are pairwise beyond sensing range on a line road
    span = cfg.road_length_m / cfg.sps.sensing_range_m
    return int(min(n, math.ceil(span) + 2))


def place_vehicles(cfg: Config, drift: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = cfg.scenario.n_vehicles
    keys = rng.stream_keys(cfg.seed, np.arange(n), rng.P_PLACE)
    x0 = rng.uniform(keys, np.zeros(n)) * cfg.road_length_m
    lane = (rng.uniform(keys, np.ones(n)) * cfg.scenario.lanes).astype(np.int64)
    y = lane * LANE_WIDTH_M
    if drift:
        jitter = 0.9 + 0.2 * rng.uniform(keys, np.full(n, 2))
        vel = cfg.scenario.speed_kmh / 3.6 * jitter
    else:
        vel = np.zeros(n)
    return x0, y, vel


def init_world(cfg: Config, opts: SimOptions | None = None, duration_ms: float | None = None) -> World:
    opts = opts or SimOptions()
    sps, atk = cfg.sps, cfg.attack
    if atk.effective_x >= 1.0:
        raise ConfigError("attack_x", "degenerate starvation: no CSR ever found")
    n, g, m, k = cfg.scenario.n_vehicles, sps.gamma, sps.m_subchannels, sps.k_contiguous
    dur = cfg.sim_duration_ms if duration_ms is None else duration_ms
    T = int(round(dur / sps.delta_ms))
    warm_ms = 10 * sps.rri_ms if opts.warmup_ms is None else opts.warmup_ms
    warm = int(round(warm_ms / sps.delta_ms))
    thr = np.asarray([t / sps.delta_ms for t in opts.thresholds_ms], dtype=np.float64)
    if np.any(thr <= 0):
        raise ValueError("thresholds must be > 0")
    eve_mode = atk.mode == "active_eve"
    r = cfg.eve_rri_subframes
    q = eve_quota(cfg) if eve_mode else 0
    if q > r * g * m or (eve_mode and atk.x > 1.0 / r + 1e-12):
        raise ValueError(f"attack_x unachievable with eve_rri_ms={atk.eve_rri_ms:g}; "
                         f"max achievable fraction is {1.0 / r:.6g}")
    hcap = holder_capacity(cfg, opts.drift)

    ip = np.zeros(N_IPARAMS, dtype=np.int64)
    ip[I_T], ip[I_WARM], ip[I_G], ip[I_M], ip[I_K] = T, warm, g, m, k
    ip[I_RCMIN], ip[I_RCMAX] = sps.rc_min, sps.rc_max
    ip[I_EVE_MODE] = int(eve_mode)
    ip[I_ABSTRACT] = int(opts.abstract_phy)
    ip[I_HD] = int(opts.half_duplex and not opts.abstract_phy)
    ip[I_EVE_R], ip[I_Q] = r, q
    ip[I_RING] = int(opts.drift)
    ip[I_N], ip[I_S1], ip[I_HCAP] = n, m - k + 1, hcap
    ip[I_EVE_ON] = int(eve_mode and q > 0)
    ip[I_LOGCAP], ip[I_RLOGCAP], ip[I_NTHR] = opts.log_capacity, opts.reset_log_capacity, len(thr)
    ip[I_EVE_T0] = -g * r

    fp = np.zeros(N_FPARAMS, dtype=np.float64)
    if atk.mode == "probabilistic":
        fp[F_P_IDLE] = (1.0 - atk.x) * sps.p_sch
    else:
        fp[F_P_IDLE] = sps.p_sch
    fp[F_P_KEEP], fp[F_PHI] = sps.p_keep, sps.phi
    fp[F_RAW2] = sps.raw_m * sps.raw_m
    fp[F_SENSE2] = sps.sensing_range_m * sps.sensing_range_m
    fp[F_ROAD] = cfg.road_length_m

    x0, y, vel = place_vehicles(cfg, opts.drift)
    ids = np.arange(n)
    pair_ids = (ids[:, None] << rng.PAIR_SHIFT) | ids[None, :]
    i64 = lambda v: np.full(n, v, dtype=np.int64)  # noqa: E731
    nthr = len(thr)
    return World(
        ip=ip, fp=fp, thr=thr, x0=x0, y=y.astype(np.float64), vel=vel,
        k_idle=rng.stream_keys(cfg.seed, ids, rng.P_IDLE),
        k_csr=rng.stream_keys(cfg.seed, ids, rng.P_CSR),
        k_rc=rng.stream_keys(cfg.seed, ids, rng.P_RC),
        k_keep=rng.stream_keys(cfg.seed, ids, rng.P_KEEP),
        k_phy=rng.stream_keys(cfg.seed, pair_ids.ravel(), rng.P_PHY).reshape(n, n),
        next_tx=i64(NEVER), idle_since=i64(0), rc=i64(0), hold_sf=i64(-1), hold_sc=i64(-1),
        age=i64(0), anchor=i64(0), ctr_csr=i64(0), ctr_rc=i64(0), ctr_keep=i64(0), since_dec=i64(0),
        eve_until=np.full((g, m), -NEVER, dtype=np.int64),
        occ=np.zeros((g, m), dtype=np.int64),
        holders=np.full((g, m, hcap), -1, dtype=np.int64),
        eve_ptr=np.zeros(1, dtype=np.int64),
        last_rx=np.full((n, n), -1.0), last_reset=np.zeros((n, n)),
        pend=np.zeros((n, n), dtype=np.bool_), pend_gen=np.zeros((n, n)),
        area2=np.zeros((n, n)), obs=np.zeros((n, n)), nrx=np.zeros((n, n), dtype=np.int64),
        tcount=np.zeros((n, n, nthr)),
        reset_hist=np.zeros(HIST_BINS + 1, dtype=np.int64),
        reset_le=np.zeros(nthr, dtype=np.int64),
        reset_sum=np.zeros(1),
        rc_hist=np.zeros(sps.rc_max + 2, dtype=np.int64),
        stats=np.zeros(N_STATS, dtype=np.int64),
        log=np.zeros((max(opts.log_capacity, 0), 8), dtype=np.int64),
        rlog=np.zeros((max(opts.reset_log_capacity, 0), 4), dtype=np.int64),
        t_next=-g * r if eve_mode else 0,
        cfg=cfg,
    )
