"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The numba functions are compiled once before timing.
"""

import argparse
import json
import time

import numpy as np

from pdocalc import _kernels
from pdocalc.spectral_core import circle_spectrum, default_contour, contour_nodes


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def contour_case(N, nodes):
    spec = circle_spectrum()
    z, k = 0.5, 2
    contour = default_contour(spec, z, k, N, node_count=nodes)
    lam, w = contour_nodes(contour, z)
    mu = spec.values(N)
    return lam, w, mu, k + 1


def levels_case(N, band, max_k, seed=0):
    rng = np.random.default_rng(seed)
    rows = np.repeat(np.arange(N), 2 * band + 1)
    cols = np.clip(rows + np.tile(np.arange(-band, band + 1), N), 0, N - 1)
    vals = rng.standard_normal(rows.shape[0])
    f = np.sqrt(np.arange(1, N + 1, dtype=float) ** 2 + 1)
    return rows, cols, vals, f, max_k


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None, help="write timings here")
    args = parser.parse_args(argv)

    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    cases = []
    for N, nodes in ((128, 4096), (512, 4096), (2048, 4096)):
        a = contour_case(N, nodes)
        _kernels.contour_sum_numba(*a)
        ref = _kernels.contour_sum_numpy(*a)
        err = float(np.abs(_kernels.contour_sum_numba(*a) - ref).max() / np.abs(ref).max())
        cases.append(("contour_sum", f"N={N} nodes={nodes}", best_of(lambda: _kernels.contour_sum_numpy(*a), args.repeat),
                      best_of(lambda: _kernels.contour_sum_numba(*a), args.repeat), err))
    for N, band in ((4096, 2), (65536, 2), (65536, 8)):
        a = levels_case(N, band, 4)
        _kernels.commutator_levels_numba(*a)
        ref = _kernels.commutator_levels_numpy(*a)
        err = float(np.abs(_kernels.commutator_levels_numba(*a) - ref).max())
        cases.append(("commutator_levels", f"N={N} band={band} k<=4", best_of(lambda: _kernels.commutator_levels_numpy(*a), args.repeat),
                      best_of(lambda: _kernels.commutator_levels_numba(*a), args.repeat), err))

    print(f"{'kernel':<18} {'case':<24} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8} {'max diff':>10}")
    for name, case, t_np, t_nb, err in cases:
        print(f"{name:<18} {case:<24} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f} {err:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(
                [{"kernel": n, "case": c, "numpy_s": a, "numba_s": b, "max_diff": e} for n, c, a, b, e in cases],
                fh,
                indent=2,
            )


if __name__ == "__main__":
    main()
