"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel on a few sizes under both backends and prints a
table of per-call times. Note that the distance matrices feeding the
selection kernels are always BLAS products; the backends differ in the
selection / calibration / scatter stages.

    python benchmarks/bench_kernels.py [--sizes 1000,3000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sentrycam import kernels


def _time(fn, repeat: int) -> float:
    fn()  # warm (and JIT-compile) once
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(sizes: list[int], dim: int, k: int, repeat: int) -> None:
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        pts = rng.standard_normal((n, dim))
        emb = rng.standard_normal((n, 2))
        idx = rng.integers(0, n, size=8 * n)
        vals = rng.standard_normal((idx.size, 2))
        knn_dists = np.sort(rng.uniform(0.1, 2.0, size=(n, k)), axis=1)
        rho = knn_dists[:, 0]

        cases = {
            f"knn n={n}": lambda: kernels.knn(pts, k),
            f"kth_nn_mean n={n}": lambda: kernels.avg_kth_nn_distance(pts, k),
            f"sigma_bisect n={n}": lambda: kernels.smooth_knn_sigma(knn_dists, rho, np.log2(k)),
            f"scatter_add e={idx.size}": lambda: kernels.scatter_add(
                np.zeros((n, 2)), idx, vals
            ),
            f"covering n={n}": lambda: kernels.covering_radius(pts, pts[: n // 10]),
        }
        for name, fn in cases.items():
            timing = {}
            for backend in ("numpy", "numba"):
                try:
                    kernels.set_backend(backend)
                except RuntimeError:
                    timing[backend] = float("nan")
                    continue
                timing[backend] = _time(fn, repeat)
            rows.append((name, timing["numpy"], timing["numba"]))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        ratio = t_np / t_nb if t_nb and np.isfinite(t_nb) else float("nan")
        print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  {ratio:>7.2f}x")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,3000")
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--k", type=int, default=15)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    bench([int(s) for s in args.sizes.split(",")], args.dim, args.k, args.repeat)


if __name__ == "__main__":
    main()
