"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--points N]

Both backends are imported directly, so RPRSLICE_BACKEND does not matter
here; it only decides which one the library uses.
"""
import argparse
import math
import time

import numpy as np

from rprslice._kernels import BACKEND, get_backend
from rprslice.kinematics import NEWTON_TOL, packed
from rprslice.model import reference_geometry


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--points", type=int, default=400, help="joint points per batch")
    ap.add_argument("--grid", type=int, default=512, help="singular-value grid size")
    args = ap.parse_args()

    geo = packed(reference_geometry())
    rng = np.random.default_rng(0)
    rho23 = np.column_stack([rng.uniform(0, 50, args.points), rng.uniform(0, 50, args.points)])
    t = np.linspace(0, 2 * math.pi, args.grid, endpoint=False)
    out = np.full((6, 2), np.nan)

    cases = {
        "fk_raw (17, 15, 15)": lambda b: b.fk_raw(geo, 17.0, 15.0, 15.0, 1024, NEWTON_TOL, 50, out),
        f"fk_raw_batch x{args.points}": lambda b: b.fk_raw_batch(geo, 17.0, rho23, 1024, NEWTON_TOL, 50),
        f"fk_count_batch x{args.points}": lambda b: b.fk_count_batch(geo, 17.0, rho23, 1024),
        f"singular_value_grid {args.grid}^2": lambda b: b.singular_value_grid(geo, 17.0, t, t),
    }
    backends = {name: get_backend(name) for name in ("numba", "numpy")}
    for b in backends.values():
        for fn in cases.values():
            fn(b)  # compile / warm up

    print(f"library backend: {BACKEND}")
    print(f"{'kernel':34s} {'numba (s)':>11s} {'numpy (s)':>11s} {'speedup':>8s}")
    for label, fn in cases.items():
        tn = best_of(lambda: fn(backends["numba"]), args.repeat)
        tp = best_of(lambda: fn(backends["numpy"]), args.repeat)
        print(f"{label:34s} {tn:11.4f} {tp:11.4f} {tp / tn:8.1f}")


if __name__ == "__main__":
    main()
