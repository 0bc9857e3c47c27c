"""Sawtooth AoI accounting, PRR, TDR and resource availability.

Per (tx, rx) pair the AoI grows with slope one and drops at each successful
reception to ``rx_time - gen_time``, where ``gen_time`` belongs to the
oldest update that has been attempted without success since the last
delivery (head-of-line semantics; with no failed attempt in between this is
simply the delivered packet).  Areas are integrated in closed form and stored
doubled, so integer timestamps give exact integer-valued floats.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .sim.world import (
    F_RAW2, F_ROAD, HIST_BINS, I_RING, S_ATTEMPT, S_AVAIL_FREE, S_AVAIL_TOTAL, S_COLL, S_EXIT, S_HD, S_KEEP,
    S_KEEPDEC, S_NOTFOUND, S_OK, S_OOR, S_PASSAGE_N, S_PASSAGE_SUM, S_PHY, S_RESET_N,
    S_RLOG_N, S_TX, World, positions_x,
)

FAIL_OUTCOMES = ("collision", "phy_loss", "half_duplex")


class MetricsError(ValueError):
    pass


class AoiTracker:
    """Per-pair sawtooth accumulator over ``n_nodes`` x ``n_nodes`` pairs.

    Time is in tracker units (``unit_ms`` milliseconds each).  Only the span
    ``[warmup, horizon]`` contributes to areas and samples.
    """

    def __init__(self, n_nodes: int, thresholds=(100.0, 120.0, 400.0), warmup: float = 0.0,
                 horizon: float = math.inf, unit_ms: float = 1.0, keep_samples: bool = True):
        n = int(n_nodes)
        self.n = n
        self.thr = np.asarray(thresholds, dtype=np.float64)
        self.warmup = float(warmup)
        self.horizon = float(horizon)
        self.unit_ms = float(unit_ms)
        self.last_rx = np.full((n, n), -1.0)
        self.last_reset = np.zeros((n, n))
        self.pend = np.zeros((n, n), dtype=np.bool_)
        self.pend_gen = np.zeros((n, n))
        self.area2 = np.zeros((n, n))
        self.obs = np.zeros((n, n))
        self.nrx = np.zeros((n, n), dtype=np.int64)
        self.tcount = np.zeros((n, n, len(self.thr)))
        self.reset_hist = np.zeros(HIST_BINS + 1, dtype=np.int64)
        self.reset_le = np.zeros(len(self.thr), dtype=np.int64)
        self.reset_sum = np.zeros(1)
        self.n_resets = 0
        self.reset_samples: list | None = [] if keep_samples else None

    @classmethod
    def from_world(cls, w: World) -> "AoiTracker":
        """View the engine's accumulators as a tracker (arrays are shared, not copied)."""
        tr = cls.__new__(cls)
        tr.n = w.n
        tr.thr = w.thr
        tr.warmup = float(w.warmup)
        tr.horizon = float(w.horizon)
        tr.unit_ms = float(w.cfg.sps.delta_ms) if w.cfg is not None else 1.0
        for name in ("last_rx", "last_reset", "pend", "pend_gen", "area2", "obs", "nrx",
                     "tcount", "reset_hist", "reset_le", "reset_sum"):
            setattr(tr, name, getattr(w, name))
        tr.n_resets = int(w.stats[S_RESET_N])
        nlog = int(w.stats[S_RLOG_N])
        tr.reset_samples = [(int(a), int(b), float(c), float(d)) for a, b, c, d in w.rlog[:nlog]]
        return tr

    def _integrate(self, u, r, until):
        a0 = self.last_rx[u, r]
        a = max(a0, self.warmup)
        b = min(until, self.horizon)
        if b > a:
            v0 = self.last_reset[u, r] + (a - a0)
            L = b - a
            self.area2[u, r] += 2.0 * L * v0 + L * L
            self.obs[u, r] += L
            self.tcount[u, r] += np.minimum(np.clip(self.thr - v0, 0.0, None), L)

    def finalized(self, horizon: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Areas, observed spans and time-below-threshold, closed at ``horizon``."""
        h = self.horizon if horizon is None else float(horizon)
        if not math.isfinite(h):
            raise MetricsError("a finite horizon is required")
        area2, obs, tc = self.area2.copy(), self.obs.copy(), self.tcount.copy()
        us, rs = np.nonzero(self.last_rx >= 0.0)
        a0 = self.last_rx[us, rs]
        a = np.maximum(a0, self.warmup)
        L = h - a
        sel = L > 0
        us, rs, a, a0, L = us[sel], rs[sel], a[sel], a0[sel], L[sel]
        v0 = self.last_reset[us, rs] + (a - a0)
        np.add.at(area2, (us, rs), 2.0 * L * v0 + L * L)
        np.add.at(obs, (us, rs), L)
        c = np.minimum(np.clip(self.thr[None, :] - v0[:, None], 0.0, None), L[:, None])
        np.add.at(tc, (us, rs), c)
        return area2, obs, tc


def _get(ev, name):
    return ev[name] if isinstance(ev, dict) else getattr(ev, name)


def record_reception(tracker: AoiTracker, ev) -> AoiTracker:
    """Fold one reception event (any outcome) into the tracker.

    ``ok`` integrates the sawtooth up to the reception and resets it; failed
    outcomes mark the packet as pending; ``out_of_range`` is ignored.
    """
    u, r = int(_get(ev, "tx_id")), int(_get(ev, "rx_id"))
    gen = float(_get(ev, "gen_time_ms")) / tracker.unit_ms
    rx = float(_get(ev, "rx_time_ms")) / tracker.unit_ms
    outcome = _get(ev, "outcome")
    if outcome == "out_of_range":
        return tracker
    if tracker.last_rx[u, r] >= 0.0 and rx < tracker.last_rx[u, r]:
        raise MetricsError(f"non-monotone reception time for pair ({u},{r}): "
                           f"{rx} after {tracker.last_rx[u, r]}")
    if outcome != "ok":
        if outcome not in FAIL_OUTCOMES:
            raise MetricsError(f"unknown outcome {outcome!r}")
        if not tracker.pend[u, r]:
            tracker.pend[u, r] = True
            tracker.pend_gen[u, r] = gen
        return tracker
    if tracker.pend[u, r]:
        reset = rx - tracker.pend_gen[u, r]
        tracker.pend[u, r] = False
    else:
        reset = rx - gen
    if tracker.last_rx[u, r] >= 0.0:
        tracker._integrate(u, r, rx)
    tracker.last_rx[u, r] = rx
    tracker.last_reset[u, r] = reset
    if rx >= tracker.warmup:
        tracker.nrx[u, r] += 1
        tracker.reset_hist[min(int(math.ceil(reset)), HIST_BINS)] += 1
        tracker.reset_sum[0] += reset
        tracker.reset_le += (reset <= tracker.thr)
        tracker.n_resets += 1
        if tracker.reset_samples is not None:
            tracker.reset_samples.append((u, r, rx, reset))
    return tracker


def time_average_aoi(tracker: AoiTracker, horizon: float | None = None, *, pooled: bool = True):
    """Time-average AoI in ms, or ``None`` when no pair has data.

    ``pooled`` divides total area by total observed time; otherwise each pair's
    average is taken first and the pair averages are averaged.
    """
    h = tracker.horizon if horizon is None else float(horizon)
    if not h > tracker.warmup:
        raise MetricsError("horizon must exceed the warm-up (zero-length observation)")
    area2, obs, _ = tracker.finalized(h)
    have = obs > 0
    if not np.any(have):
        return None
    if pooled:
        return float(area2.sum() / (2.0 * obs.sum())) * tracker.unit_ms
    return float(np.mean(area2[have] / (2.0 * obs[have]))) * tracker.unit_ms


def tdr(tracker: AoiTracker, threshold_ms: float):
    """Fraction of reset samples with reset AoI at or below ``threshold_ms``."""
    if not threshold_ms > 0:
        raise MetricsError("threshold must be > 0")
    if tracker.n_resets == 0:
        return None
    thr = threshold_ms / tracker.unit_ms
    hit = np.flatnonzero(np.isclose(tracker.thr, thr, rtol=0, atol=1e-9))
    if hit.size:
        return float(tracker.reset_le[hit[0]] / tracker.n_resets)
    # histogram bins hold ceil(reset); exact for integer thresholds
    top = min(int(math.floor(thr)), HIST_BINS - 1)
    return float(tracker.reset_hist[: top + 1].sum() / tracker.n_resets) if top >= 0 else 0.0


def time_tdr(tracker: AoiTracker, threshold_ms: float, horizon: float | None = None):
    """Fraction of observed time during which the AoI is at or below ``threshold_ms``."""
    thr = threshold_ms / tracker.unit_ms
    hit = np.flatnonzero(np.isclose(tracker.thr, thr, rtol=0, atol=1e-9))
    if not hit.size:
        raise MetricsError(f"threshold {threshold_ms} ms was not registered before the run")
    _, obs, tc = tracker.finalized(horizon)
    tot = obs.sum()
    if tot == 0:
        return None
    return float(tc[:, :, hit[0]].sum() / tot)


def prr(events) -> float | None:
    """Successful over attempted in-range receptions; ``out_of_range`` excluded.

    Accepts a sequence of reception events or a mapping of outcome counts.
    """
    if isinstance(events, dict):
        counts = events
    else:
        counts = {}
        for ev in events:
            o = _get(ev, "outcome")
            counts[o] = counts.get(o, 0) + 1
    ok = counts.get("ok", 0)
    den = ok + sum(counts.get(o, 0) for o in FAIL_OUTCOMES)
    return None if den == 0 else ok / den


def available_resource_fraction(w: World, t: int | None = None) -> float | None:
    """Time-averaged share of selectable windows each UE sees as free.

    With ``t`` given, returns a one-off snapshot of the current map instead.
    """
    if t is None:
        tot = int(w.stats[S_AVAIL_TOTAL])
        return None if tot == 0 else int(w.stats[S_AVAIL_FREE]) / tot
    from .sim import _kernel_np as knp
    probe = w.copy()
    probe.stats[:] = 0
    knp.sample_availability(probe, t)
    return int(probe.stats[S_AVAIL_FREE]) / int(probe.stats[S_AVAIL_TOTAL])


# --------------------------------------------------------------------------
# report

@dataclass
class MetricsReport:
    avg_aoi_ms: float | None
    avg_aoi_per_pair_ms: float | None
    reset_aoi_mean_ms: float | None
    prr: float | None
    tdr_per_threshold: dict
    time_tdr_per_threshold: dict
    available_resource_fraction: float | None
    n_pairs: int
    n_pairs_no_data: int
    n_receptions: int
    outcome_counts: dict = field(default_factory=dict)
    idle_exit_rate: float | None = None
    not_found_rate: float | None = None
    keep_fraction: float | None = None
    mean_passage_ms: float | None = None
    rc_histogram: dict = field(default_factory=dict)
    n_tx: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tdr_per_threshold"] = {_key(k): v for k, v in self.tdr_per_threshold.items()}
        d["time_tdr_per_threshold"] = {_key(k): v for k, v in self.time_tdr_per_threshold.items()}
        d["rc_histogram"] = {str(k): v for k, v in self.rc_histogram.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("avg_aoi_ms", self.avg_aoi_ms),
            ("avg_aoi_per_pair_ms", self.avg_aoi_per_pair_ms),
            ("reset_aoi_mean_ms", self.reset_aoi_mean_ms),
            ("prr", self.prr),
            ("available_resource_fraction", self.available_resource_fraction),
            ("n_pairs", self.n_pairs),
            ("n_pairs_no_data", self.n_pairs_no_data),
            ("n_receptions", self.n_receptions),
        ]
        for k, v in self.tdr_per_threshold.items():
            rows.append((f"tdr@{_key(k)}ms", v))
        for k, v in self.time_tdr_per_threshold.items():
            rows.append((f"time_tdr@{_key(k)}ms", v))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in rows) + "\n"


def _key(x: float) -> str:
    return f"{x:g}"


def _fmt(v) -> str:
    if v is None:
        return "no data"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _ratio(a, b):
    return None if b == 0 else a / b


def report_from_world(w: World) -> MetricsReport:
    tr = AoiTracker.from_world(w)
    d = tr.unit_ms
    h = float(w.horizon)
    s = w.stats
    thr_ms = [float(t) * d for t in w.thr]
    if h > tr.warmup:
        area2, obs, tc = tr.finalized(h)
    else:
        area2, obs, tc = tr.area2, tr.obs, tr.tcount
    have = obs > 0
    tot = obs.sum()
    avg = float(area2.sum() / (2.0 * tot)) * d if tot > 0 else None
    per_pair = float(np.mean(area2[have] / (2.0 * obs[have]))) * d if np.any(have) else None
    nres = int(s[S_RESET_N])
    x = positions_x(w.x0, w.vel, max(w.warmup, 0), w.fp[F_ROAD], bool(w.ip[I_RING]))
    d2 = (x[:, None] - x[None, :]) ** 2 + (w.y[:, None] - w.y[None, :]) ** 2
    in_range = d2 <= w.fp[F_RAW2]
    np.fill_diagonal(in_range, False)
    counts = {"ok": int(s[S_OK]), "collision": int(s[S_COLL]), "phy_loss": int(s[S_PHY]),
              "half_duplex": int(s[S_HD]), "out_of_range": int(s[S_OOR])}
    rc_hist = {int(i): int(c) for i, c in enumerate(w.rc_hist) if c}
    return MetricsReport(
        avg_aoi_ms=avg,
        avg_aoi_per_pair_ms=per_pair,
        reset_aoi_mean_ms=float(w.reset_sum[0] / nres) * d if nres else None,
        prr=prr(counts),
        tdr_per_threshold={t: (int(w.reset_le[i]) / nres if nres else None) for i, t in enumerate(thr_ms)},
        time_tdr_per_threshold={t: (float(tc[:, :, i].sum() / tot) if tot > 0 else None)
                                for i, t in enumerate(thr_ms)},
        available_resource_fraction=available_resource_fraction(w),
        n_pairs=int(np.count_nonzero(have)),
        n_pairs_no_data=int(np.count_nonzero(in_range & ~have)),
        n_receptions=nres,
        outcome_counts=counts,
        idle_exit_rate=_ratio(int(s[S_EXIT]), int(s[S_ATTEMPT])),
        not_found_rate=_ratio(int(s[S_NOTFOUND]), int(s[S_EXIT]) + int(s[S_NOTFOUND])),
        keep_fraction=_ratio(int(s[S_KEEP]), int(s[S_KEEPDEC])),
        mean_passage_ms=int(s[S_PASSAGE_SUM]) / int(s[S_PASSAGE_N]) * d if s[S_PASSAGE_N] else None,
        rc_histogram=rc_hist,
        n_tx=int(s[S_TX]),
    )


def merge_reports(reports) -> dict:
    """Mean and sample std of the headline numbers across replicas."""
    reports = list(reports)
    out = {}
    for name in ("avg_aoi_ms", "avg_aoi_per_pair_ms", "reset_aoi_mean_ms", "prr",
                 "available_resource_fraction"):
        vals = np.array([getattr(r, name) for r in reports if getattr(r, name) is not None], dtype=float)
        out[name] = float(vals.mean()) if vals.size else None
        out[name + "_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return out


# --------------------------------------------------------------------------
# CSV helpers

RESET_CSV_HEADER = ("tx_id", "rx_id", "rx_ms", "reset_ms")


def reset_samples_csv(tracker: AoiTracker) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(RESET_CSV_HEADER)
    d = tracker.unit_ms
    for u, r, rx, reset in tracker.reset_samples or ():
        wr.writerow([u, r, _num(rx * d), _num(reset * d)])
    return buf.getvalue()


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))
