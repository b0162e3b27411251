"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 48] [--repeat 5]

Both paths are called directly, so NLHARDY_NUMBA does not matter here.  The
first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from nlhardy import _kernels
from nlhardy.constants import FracParams
from nlhardy.geometry import OMEGA, build_grid, label_ball_config
from nlhardy.kernel import unit_weight_table


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n):
    params = FracParams(2, 0.25)
    grid = build_grid(2, 1.0, n)
    config = label_ball_config(grid, 0.4, (0.6, 0.9))
    table = np.ascontiguousarray(unit_weight_table(2, params.s, n, params.quad).reshape(-1))
    labels = config.labels.astype(np.int64)
    coords = config.index_coords.astype(np.int64)
    scale = params.a_ds * config.h ** (2 - 2 * params.s)

    rng = np.random.default_rng(0)
    m = config.size
    C = _kernels.conductance_numpy(labels, coords, table, n, scale, int(OMEGA))
    u = np.exp(rng.standard_normal(m))
    v = rng.standard_normal(m)
    xs = rng.uniform(-1, 1, size=(400, 2))
    ys = config.centers
    w = np.full(len(ys), config.h**2)

    yield ("conductance", (labels, coords, table, n, scale, int(OMEGA)),
           _kernels.conductance_numpy, getattr(_kernels, "conductance_numba", None))
    yield ("kernel_sum", (xs, ys, w, 2.5),
           _kernels.kernel_sum_numpy, getattr(_kernels, "kernel_sum_numba", None))
    yield ("picone_remainder", (C, u, v),
           _kernels.picone_remainder_numpy, getattr(_kernels, "picone_remainder_numba", None))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"grid {args.n}x{args.n}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, call_args, f_np, f_nb in cases(args.n):
        t_np, r_np = best_of(lambda: f_np(*call_args), args.repeat)
        if f_nb is None:
            print(f"{name:<18}{t_np:12.4f}{'n/a':>12}")
            continue
        f_nb(*call_args)  # compile
        t_nb, r_nb = best_of(lambda: f_nb(*call_args), args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_nb))))
        print(f"{name:<18}{t_np:12.4f}{t_nb:12.4f}{t_np / t_nb:10.1f}{diff:12.2e}")


if __name__ == "__main__":
    main()
