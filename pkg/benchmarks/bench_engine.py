#!/usr/bin/env python3
"""Compiled kernel vs numpy fallback: wall time per simulated second.

    python3 benchmarks/bench_engine.py [--duration-ms 5000] [--sizes 25,50,100,200]

Both backends run the same configuration and seed; the script also checks
that the final worlds agree bit for bit.  The numba timing excludes JIT
compilation (a short warm-up run is done first).
"""

import argparse
import time

import numpy as np

from aoi_starve.config import default_config
from aoi_starve.sim import engine


def timed(cfg, duration_ms, backend, repeat):
    best, world = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        world = engine.run(cfg, duration_ms, backend=backend).world
        best = min(best, time.perf_counter() - t0)
    return best, world


def same(a, b):
    return all(np.array_equal(v, getattr(b, k)) for k, v in a.array_fields().items())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration-ms", type=int, default=5000)
    ap.add_argument("--sizes", default="25,50,100,200")
    ap.add_argument("--mode", default="off", choices=("off", "probabilistic", "active_eve"))
    ap.add_argument("--x", type=float, default=0.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    engine.run(default_config(n_vehicles=4), 300, backend="numba")  # compile
    print(f"{'N':>5} {'numba s/sim-s':>14} {'numpy s/sim-s':>14} {'speedup':>8}  identical")
    for n in (int(v) for v in args.sizes.split(",")):
        cfg = default_config(n_vehicles=n, attack_mode=args.mode, attack_x=args.x if args.mode != "off" else 0.0)
        t_nb, w_nb = timed(cfg, args.duration_ms, "numba", args.repeat)
        t_np, w_np = timed(cfg, args.duration_ms, "numpy", 1)
        per = 1000.0 / args.duration_ms
        print(f"{n:>5} {t_nb * per:>14.4f} {t_np * per:>14.4f} {t_np / t_nb:>8.1f}  {same(w_nb, w_np)}")


if __name__ == "__main__":
    main()
