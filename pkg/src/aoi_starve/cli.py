"""Command-line entry point: ``aoi-starve {analytic,simulate,sweep,safety,validate}``."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import experiments as ex
from .analytic import AnalyticError
from .config import ConfigError, default_config, load_config
from .safety import ASSUMPTION, SafetyError, builtin_services, load_services
from .sim.world import DEFAULT_THRESHOLDS_MS, SimOptions

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--out", help="output directory (AOI_STARVE_OUT overrides)")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--duration-ms", type=float, help="simulated horizon per run")
    common.add_argument("--jobs", type=int, default=1, help="parallel replicas")
    common.add_argument("--attack-mode", choices=("off", "probabilistic", "active-eve"))
    common.add_argument("--x", type=float, help="starvation fraction")
    common.add_argument("--abstract-phy", action="store_true",
                        help="disable collisions and half-duplex; receptions succeed with prob. phi")
    common.add_argument("--no-half-duplex", action="store_true")
    common.add_argument("--drift", action="store_true", help="constant-velocity drift on a ring road")
    common.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS_MS),
                        help="comma-separated AoI thresholds (ms) to track")

    p = argparse.ArgumentParser(prog="aoi-starve", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analytic", parents=[common], help="closed-form AoI table")
    a.add_argument("--xs", type=_floats, help="comma-separated x values")

    s = sub.add_parser("simulate", parents=[common], help="one simulation run")
    s.add_argument("--events", type=int, default=0, metavar="N", help="dump up to N raw events to events.csv")
    s.add_argument("--reset-samples", type=int, default=100_000, metavar="N",
                   help="dump up to N reset samples to reset_samples.csv")

    w = sub.add_parser("sweep", parents=[common], help="parameter sweep with replicas")
    w.add_argument("--axis", required=True, choices=ex.SWEEP_AXES)
    w.add_argument("--values", required=True, type=_floats)
    w.add_argument("--replicas", type=int, default=10)

    f = sub.add_parser("safety", parents=[common], help="SLR verdicts and hazard curves")
    f.add_argument("--xs", type=_floats, default=list(ex.ATTACK_X_GRID))
    f.add_argument("--services", help="catalog CSV: name,threshold_ms,target_slr")
    f.add_argument("--windows", type=_floats, help="hazard windows in seconds")
    f.add_argument("--time-tdr", action="store_true", help="score time-fraction TDR instead of reset samples")

    v = sub.add_parser("validate", parents=[common], help="analytic-vs-simulation checks")
    v.add_argument("--analytic-gamma", type=int, help=argparse.SUPPRESS)
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    upd = {}
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.attack_mode is not None:
        upd["attack_mode"] = args.attack_mode.replace("-", "_")
    if args.x is not None:
        upd["attack_x"] = args.x
    if args.duration_ms is not None:
        upd["sim_duration_ms"] = int(args.duration_ms)
    return cfg.with_updates(**upd) if upd else cfg


def _opts(args, **kw) -> SimOptions:
    return SimOptions(abstract_phy=args.abstract_phy, half_duplex=not args.no_half_duplex,
                      drift=args.drift, thresholds_ms=tuple(args.thresholds), **kw)


def _fmt(v):
    return "-" if v is None else f"{v:.4f}" if isinstance(v, float) else str(v)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        out = ex.resolve_out_dir(args.out)
        cmd = args.command
        if cmd == "analytic":
            rows = ex.cmd_analytic(cfg, args.xs, out)
            cols = ["x", "p_sch_eff", "c0_ms", "mean_inter_success_ms", "second_moment_inter_success",
                    "average_aoi_ms", "average_aoi_renewal_ms"]
            print("  ".join(f"{c:>14}" for c in cols))
            for r in rows:
                print("  ".join(f"{r[c]:>14.6g}" for c in cols))
        elif cmd == "simulate":
            rec = ex.cmd_simulate(cfg, out, opts=_opts(args, log_capacity=args.events,
                                                        reset_log_capacity=args.reset_samples))
            print(rec.report.to_text(), end="")
            if rec.prediction is not None:
                print(f"analytic_avg_aoi_ms  {rec.prediction.average_aoi_ms:.6f}")
                print(f"relative_gap         {rec.gap:.6f}")
        elif cmd == "sweep":
            spec = ex.SweepSpec(args.axis, tuple(args.values), args.replicas, cfg.seed)
            table = ex.cmd_sweep(spec, cfg, out, jobs=args.jobs, opts=_opts(args))
            print(f"{args.axis:>10}  {'mean_aoi_ms':>12}  {'std':>8}  {'analytic':>10}  {'prr':>7}  {'avail':>7}")
            for r in table:
                print(f"{r['value']:>10g}  {_fmt(r['mean_aoi_ms']):>12}  {_fmt(r['std_aoi_ms']):>8}  "
                      f"{_fmt(r['analytic_aoi_ms']):>10}  {_fmt(r['mean_prr']):>7}  "
                      f"{_fmt(r['mean_available_fraction']):>7}")
        elif cmd == "safety":
            services = load_services(args.services) if args.services else None
            thr = {float(t) for t in args.thresholds}
            thr |= {s.aoi_threshold_ms for s in (services or builtin_services())}
            opts = dataclasses.replace(_opts(args), thresholds_ms=tuple(sorted(thr)))
            verdicts = ex.cmd_safety(cfg, out, xs=args.xs, services=services, windows=args.windows,
                                     opts=opts, time_fraction=args.time_tdr)
            print(f"{'service':<8} {'x':>5} {'tdr':>8} {'gap_pp':>8}  unsafe  p_violation@2s")
            for v in verdicts:
                p2 = dict(v.violation_curve).get(2.0)
                print(f"{v.service:<8} {v.x:>5g} {v.measured_tdr:>8.4f} {v.gap_pp:>8.2f}  {str(v.unsafe):<6}  {_fmt(p2)}")
            print(f"assumption: {ASSUMPTION}")
        elif cmd == "validate":
            checks = ex.cmd_validate(cfg, out, duration_ms=args.duration_ms or 1_000_000,
                                     analytic_gamma=args.analytic_gamma)
            for c in checks:
                print(c.line())
            if not all(c.passed for c in checks):
                return EXIT_VALIDATION
    except (ConfigError, AnalyticError, SafetyError, ex.MissingRunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
