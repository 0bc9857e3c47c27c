"""Experiment orchestration: single runs, sweeps, safety scoring, validation."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from . import analytic, rng
from .config import Config, ConfigError, SpsParams, config_hash, serialize_config
from .metrics import AoiTracker, MetricsReport, report_from_world, reset_samples_csv
from .safety import (ServiceSpec, builtin_services, default_windows, evaluate_service,
                     verdicts_csv, verdicts_json)
from .sim import engine
from .sim.world import OUTCOME_NAMES, S_ATTEMPT, SimOptions

SWEEP_AXES = ("x", "n_vehicles", "p_keep", "phi")
ATTACK_X_GRID = (0.0, 0.5, 0.8, 0.9)
EVENTS_CSV_HEADER = ("type", "tx_id", "rx_id", "gen_ms", "time_ms", "subframe", "subchannel", "outcome")


class MissingRunError(ValueError):
    pass


class SweepError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


# --------------------------------------------------------------------------
# records

def prediction_for(cfg: Config, gamma: int | None = None):
    """Analytic prediction matching a config, or None when starvation is total."""
    x = cfg.attack.effective_x
    try:
        return analytic.average_aoi(cfg.sps.p_sch, x, gamma or cfg.sps.gamma, cfg.sps.phi)
    except analytic.AnalyticError:
        return None


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    report: MetricsReport
    prediction: analytic.AoiPrediction | None
    wall_s: float = field(default=0.0, compare=False)
    backend: str = field(default="", compare=False)

    @property
    def gap(self) -> float | None:
        if self.prediction is None or self.report.avg_aoi_ms is None:
            return None
        a = self.prediction.average_aoi_ms
        return abs(self.report.avg_aoi_ms - a) / a

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "metrics": self.report.to_dict(),
            "analytic": None if self.prediction is None else self.prediction.as_dict(),
            "relative_gap": self.gap,
        }


def simulate(cfg: Config, duration_ms: float | None = None, seed: int | None = None,
             opts: SimOptions | None = None):
    """Run one simulation; returns ``(RunRecord, RunResult)``."""
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
    res = engine.run(cfg, duration_ms, opts=opts)
    rec = RunRecord(config_hash(cfg), cfg.seed, report_from_world(res.world), prediction_for(cfg),
                    res.wall_s, res.backend)
    return rec, res


def _run_only(args):
    cfg, duration_ms, opts = args
    return simulate(cfg, duration_ms, opts=opts)[0]


# --------------------------------------------------------------------------
# output helpers

def resolve_out_dir(out: str | os.PathLike | None) -> Path | None:
    env = os.environ.get("AOI_STARVE_OUT")
    if env:
        return Path(env)
    return None if out is None else Path(out)


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    p = out_dir / name
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return p


def events_csv(res: engine.RunResult) -> str:
    rows = engine.event_rows(res.world)
    d = res.world.cfg.sps.delta_ms
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(EVENTS_CSV_HEADER)
    for typ, tx, rx, gen, tm, sf, sc, out in rows:
        wr.writerow(["tx" if typ == 0 else "rx", int(tx), "" if rx < 0 else int(rx),
                     _ms(gen, d), _ms(tm, d), int(sf), int(sc), "" if out < 0 else OUTCOME_NAMES[out]])
    return buf.getvalue()


def _ms(v, d):
    x = float(v) * d
    return str(int(x)) if x.is_integer() else repr(x)


# --------------------------------------------------------------------------
# commands

def cmd_analytic(cfg: Config, xs=None, out_dir: Path | None = None) -> list[dict]:
    """Closed-form AoI quantities for each attack fraction in ``xs``."""
    xs = [cfg.attack.effective_x] if xs is None else list(xs)
    rows = []
    for x in xs:
        p = analytic.average_aoi(cfg.sps.p_sch, x, cfg.sps.gamma, cfg.sps.phi)
        rows.append({"x": float(x), **p.as_dict()})
    if out_dir is not None:
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) for k, v in r.items()})
        _write(out_dir, "analytic.csv", buf.getvalue())
        _write(out_dir, "config.echo", serialize_config(cfg))
    return rows


def cmd_simulate(cfg: Config, out_dir: Path | None = None, duration_ms: float | None = None,
                 seed: int | None = None, opts: SimOptions | None = None) -> RunRecord:
    if seed is not None:
        cfg = cfg.with_updates(seed=seed)
    opts = opts or SimOptions(reset_log_capacity=100_000)
    rec, res = simulate(cfg, duration_ms, opts=opts)
    if out_dir is not None:
        _write(out_dir, "config.echo", serialize_config(cfg))
        summary = rec.to_dict()
        summary["duration_ms"] = res.world.horizon * cfg.sps.delta_ms
        summary["warmup_ms"] = res.world.warmup * cfg.sps.delta_ms
        summary["options"] = {"abstract_phy": opts.abstract_phy, "half_duplex": opts.half_duplex,
                              "drift": opts.drift}
        _write(out_dir, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        _write(out_dir, "metrics.txt", rec.report.to_text())
        _write(out_dir, "reset_samples.csv", reset_samples_csv(AoiTracker.from_world(res.world)))
        if opts.log_capacity > 0:
            _write(out_dir, "events.csv", events_csv(res))
        _write(out_dir, "timing.json", json.dumps({"wall_s": rec.wall_s, "backend": rec.backend}) + "\n")
    return rec


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    replicas_per_point: int = 10
    root_seed: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError("axis", f"must be one of {SWEEP_AXES}")
        if self.replicas_per_point < 1:
            raise ConfigError("replicas", "must be >= 1")
        if not self.values:
            raise ConfigError("values", "at least one value is required")


def sweep_point_config(cfg: Config, axis: str, value) -> Config:
    if axis == "x":
        if cfg.attack.mode == "off":
            raise ConfigError("attack_mode", "an x sweep needs attack_mode probabilistic or active_eve")
        return cfg.with_updates(attack_x=float(value))
    if axis == "n_vehicles":
        # hold the road fixed so the vehicle count changes density, not length
        n = int(value)
        return cfg.with_updates(n_vehicles=n, density_per_km=1000.0 * n / cfg.road_length_m)
    if axis == "p_keep":
        return cfg.with_updates(p_keep=float(value))
    return cfg.with_updates(phi=float(value))


def cmd_sweep(spec: SweepSpec, cfg: Config, out_dir: Path | None = None, duration_ms: float | None = None,
              jobs: int = 1, opts: SimOptions | None = None) -> list[dict]:
    """One run per (value, replica); replicas share seeds across values."""
    opts = opts or SimOptions()
    points = [sweep_point_config(cfg, spec.axis, v) for v in spec.values]
    seeds = [rng.replica_seed(spec.root_seed, r) for r in range(spec.replicas_per_point)]
    tasks = [(pc.with_updates(seed=s), duration_ms, opts) for pc in points for s in seeds]
    records: list = [None] * len(tasks)
    failure = None
    if jobs <= 1:
        for i, t in enumerate(tasks):
            try:
                records[i] = _run_only(t)
            except Exception as exc:  # keep what finished
                failure = exc
                break
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_run_only, t) for t in tasks]
            for i, f in enumerate(futs):
                try:
                    records[i] = f.result()
                except Exception as exc:
                    failure = failure or exc
                    for g in futs[i + 1:]:
                        g.cancel()
    table = _aggregate(spec, points, records)
    if out_dir is not None:
        _write_sweep(out_dir, spec, cfg, points, records, table)
    if failure is not None:
        raise SweepError(f"sweep aborted: {failure}", table) from failure
    return table


def _aggregate(spec, points, records) -> list[dict]:
    reps = spec.replicas_per_point
    table = []
    for i, (v, pc) in enumerate(zip(spec.values, points)):
        recs = [r for r in records[i * reps:(i + 1) * reps] if r is not None]
        aoi = np.array([r.report.avg_aoi_ms for r in recs if r.report.avg_aoi_ms is not None])
        pred = prediction_for(pc)
        table.append({
            "value": v,
            "replicas": len(recs),
            "mean_aoi_ms": float(aoi.mean()) if aoi.size else None,
            "std_aoi_ms": float(aoi.std(ddof=1)) if aoi.size > 1 else 0.0,
            "mean_prr": _mean([r.report.prr for r in recs]),
            "mean_available_fraction": _mean([r.report.available_resource_fraction for r in recs]),
            "analytic_aoi_ms": None if pred is None else pred.average_aoi_ms,
            "records": recs,
        })
    return table


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _write_sweep(out_dir, spec, cfg, points, records, table):
    _write(out_dir, "config.echo", serialize_config(cfg))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([spec.axis, "replicas", "mean_aoi_ms", "std_aoi_ms", "mean_prr",
                 "mean_available_fraction", "analytic_aoi_ms"])
    for row in table:
        wr.writerow([row["value"], row["replicas"], _r(row["mean_aoi_ms"]), _r(row["std_aoi_ms"]),
                     _r(row["mean_prr"]), _r(row["mean_available_fraction"]), _r(row["analytic_aoi_ms"])])
    _write(out_dir, "sweep.csv", buf.getvalue())
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([spec.axis, "replica", "seed", "config_hash", "avg_aoi_ms", "reset_aoi_mean_ms", "prr",
                 "available_resource_fraction"])
    reps = spec.replicas_per_point
    for i, rec in enumerate(records):
        if rec is None:
            continue
        r = rec.report
        wr.writerow([spec.values[i // reps], i % reps, rec.seed, rec.config_hash, _r(r.avg_aoi_ms),
                     _r(r.reset_aoi_mean_ms), _r(r.prr), _r(r.available_resource_fraction)])
    _write(out_dir, "sweep_runs.csv", buf.getvalue())


def _r(v):
    return "" if v is None else repr(float(v))


def safety_from_reports(reports: dict, xs, services=None, windows=None, rri_ms: float = 100.0,
                        time_fraction: bool = False) -> list:
    """Verdicts for every (service, x); ``reports`` maps x to a MetricsReport."""
    missing = [x for x in xs if x not in reports]
    if missing:
        raise MissingRunError(f"no completed run for x in {missing}")
    services = builtin_services() if services is None else services
    out = []
    for svc in services:
        for x in xs:
            out.append(evaluate_service(svc, reports[x], x=x, windows=windows, rri_ms=rri_ms,
                                        time_fraction=time_fraction))
    return out


def safety_config(cfg: Config, x: float) -> Config:
    """Benign runs use mode off; attacked runs keep the configured adversary."""
    if x == 0.0:
        return cfg.with_updates(attack_mode="off", attack_x=0.0)
    mode = cfg.attack.mode if cfg.attack.mode != "off" else "active_eve"
    return cfg.with_updates(attack_mode=mode, attack_x=x)


def cmd_safety(cfg: Config, out_dir: Path | None = None, xs=ATTACK_X_GRID, services: list[ServiceSpec] | None = None,
               windows=None, duration_ms: float | None = None, opts: SimOptions | None = None,
               reports: dict | None = None, time_fraction: bool = False) -> list:
    services = builtin_services() if services is None else services
    windows = default_windows() if windows is None else windows
    if reports is None:
        thr = tuple(sorted({s.aoi_threshold_ms for s in services}))
        opts = opts or SimOptions(thresholds_ms=thr)
        reports = {x: simulate(safety_config(cfg, x), duration_ms, opts=opts)[0].report for x in xs}
    verdicts = safety_from_reports(reports, list(xs), services, windows, cfg.sps.rri_ms, time_fraction)
    if out_dir is not None:
        _write(out_dir, "config.echo", serialize_config(cfg))
        _write(out_dir, "verdicts.csv", verdicts_csv(verdicts))
        _write(out_dir, "verdicts.json", verdicts_json(verdicts) + "\n")
    return verdicts


# --------------------------------------------------------------------------
# validation

@dataclass
class Check:
    name: str
    passed: bool
    observed: str
    tolerance: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.observed} (tol {self.tolerance})"


def geometric_moments_mc(gamma: int, phi: float, n: int = 1_000_000, seed: int = 7) -> tuple[float, float]:
    """Empirical first two moments of gamma * Geometric(phi) by inverse transform."""
    u = rng.derive_substream(seed, gamma * 1000 + int(round(phi * 1000)), rng.P_MC).draws(n)
    if phi >= 1.0:
        h = np.ones(n)
    else:
        h = np.floor(np.log1p(-u) / math.log1p(-phi)) + 1.0
    t = gamma * h
    return float(t.mean()), float((t * t).mean())


def rc_chi_square(hist: dict, rc_min: int, rc_max: int) -> tuple[float, float]:
    """Chi-square statistic and p-value of RC counts against the uniform law."""
    obs = np.array([hist.get(k, 0) for k in range(rc_min, rc_max + 1)], dtype=float)
    stray = sum(v for k, v in hist.items() if not rc_min <= k <= rc_max)
    if stray:
        return math.inf, 0.0
    res = sstats.chisquare(obs)
    return float(res.statistic), float(res.pvalue)


def cmd_validate(cfg: Config, out_dir: Path | None = None, duration_ms: float = 1_000_000,
                 xs=ATTACK_X_GRID, analytic_gamma: int | None = None, mc_draws: int = 1_000_000) -> list[Check]:
    """Analytic-vs-simulation matrix plus internal consistency checks.

    ``analytic_gamma`` overrides Gamma on the analytic side only, which is
    how the fault-injection path is exercised.
    """
    checks: list[Check] = []

    def add(name, ok, obs, tol):
        checks.append(Check(name, bool(ok), obs, tol))

    for x, want in ((0.0, 201.5), (0.9, 210.5)):
        got = analytic.average_aoi(1.0, x, 100, 1.0).average_aoi_ms
        add(f"closed_form_x{x:g}", abs(got - want) <= 1e-9, f"{got!r} vs {want}", "1e-9")

    grid = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(100):
        p = analytic.average_aoi(grid.uniform(0.05, 1.0), grid.uniform(0.0, 0.95),
                                 int(grid.integers(1, 500)), grid.uniform(0.05, 1.0))
        worst = max(worst, abs(p.average_aoi_renewal_ms - p.average_aoi_ms) / p.average_aoi_ms)
    add("renewal_equals_closed_form", worst <= 1e-9, f"max rel diff {worst:.2e}", "1e-9")

    worst = 0.0
    for gg in (2, 10, 100):
        for pe in (1.0, 0.5, 0.1):
            sps = SpsParams(gamma=gg, rc_min=cfg.sps.rc_min, rc_max=cfg.sps.rc_max, p_keep=cfg.sps.p_keep)
            m = analytic.build_sps_dtmc(sps, pe)
            got = analytic.mean_first_passage_idle_to_tx(m)
            worst = max(worst, abs(got - (1 / pe + (gg - 1) / 2 + gg)))
    add("dtmc_first_passage", worst <= 1e-9, f"max abs diff {worst:.2e}", "1e-9")

    toy = analytic.build_sps_dtmc(SpsParams(gamma=2, rc_min=1, rc_max=1, p_keep=0.0), 1.0)
    d = np.abs(analytic.stationary_distribution(toy) - analytic.power_iteration(toy.transition_matrix)).max()
    add("dtmc_stationary_toy", d <= 1e-10, f"max abs diff {d:.2e}", "1e-10")

    for gg, ph in ((100, 0.5), (50, 0.25)):
        m1, m2 = geometric_moments_mc(gg, ph, mc_draws)
        e1, e2 = analytic.inter_success_moments(gg, ph)
        r = max(abs(m1 - e1) / e1, abs(m2 - e2) / e2)
        add(f"geometric_moments_g{gg}_phi{ph:g}", r <= 0.01, f"rel err {r:.4f}", "1%")

    opts = SimOptions(abstract_phy=True)
    base = cfg.with_updates(attack_mode="probabilistic")
    rows = []
    benign_report = None
    for x in xs:
        pc = base.with_updates(attack_x=x)
        rec, res = simulate(pc, duration_ms, opts=opts)
        pred = prediction_for(pc, gamma=analytic_gamma)
        sim = rec.report.avg_aoi_ms
        gap = abs(sim - pred.average_aoi_ms) / pred.average_aoi_ms
        tol = 0.02 if x == 0 else 0.08
        add(f"sim_vs_analytic_x{x:g}", gap <= tol,
            f"sim {sim:.3f} vs closed {pred.average_aoi_ms:.3f} / renewal {pred.average_aoi_renewal_ms:.3f}, gap {gap:.4f}",
            f"{tol:.0%}")
        rows.append((x, sim, pred.average_aoi_ms, pred.average_aoi_renewal_ms, gap))
        r = rec.report
        pe = (1 - x) * cfg.sps.p_sch
        # binomial bound on the per-attempt exit rate, 4 standard errors
        n_att = int(res.world.stats[S_ATTEMPT])
        band = 4.0 * math.sqrt(pe * (1 - pe) / max(n_att, 1))
        add(f"starvation_law_x{x:g}", abs(r.idle_exit_rate - pe) <= band,
            f"exit rate {r.idle_exit_rate:.5f} vs {pe:.5f} over {n_att} attempts", f"+-{band:.5f} (4 se)")
        if x == 0:
            benign_report = r

    r = benign_report
    if r is not None:
        pk = cfg.sps.p_keep
        add("keep_law", abs(r.keep_fraction - pk) <= 0.02, f"{r.keep_fraction:.4f} vs {pk}", "2 pp")
        stat, p = rc_chi_square(r.rc_histogram, cfg.sps.rc_min, cfg.sps.rc_max)
        add("rc_uniform_chi_square", p >= 0.01, f"chi2 {stat:.2f}, p {p:.3f}", "alpha 0.01")

    if out_dir is not None:
        _write(out_dir, "config.echo", serialize_config(cfg))
        _write(out_dir, "validation.txt", "".join(c.line() + "\n" for c in checks))
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["x", "sim_aoi_ms", "closed_form_aoi_ms", "renewal_aoi_ms", "relative_gap"])
        for row in rows:
            wr.writerow([repr(float(v)) for v in row])
        _write(out_dir, "validation.csv", buf.getvalue())
    return checks
