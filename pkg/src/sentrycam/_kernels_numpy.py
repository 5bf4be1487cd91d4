"""Pure-numpy implementations of the hot kernels.

These are the reference/fallback path; the numba twins in
``_kernels_numba`` must agree with them up to floating-point noise.
"""

from __future__ import annotations

import numpy as np


def topk_block(dist_block: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row k smallest entries of a distance block, ties broken by column.

    Rows must already have excluded entries (e.g. self-distances) set to +inf.
    A stable argsort keeps equal distances in column order, which is exactly
    the smaller-index tie rule.
    """
    order = np.argsort(dist_block, axis=1, kind="stable")[:, :k]
    vals = np.take_along_axis(dist_block, order, axis=1)
    return order.astype(np.int64), vals


def kth_smallest_block(dist_block: np.ndarray, kth: int) -> np.ndarray:
    """Per-row (kth+1)-smallest value (0-indexed kth order statistic)."""
    return np.partition(dist_block, kth, axis=1)[:, kth]


def sigma_bisect(
    knn_dists: np.ndarray,
    rho: np.ndarray,
    target: float,
    n_iter: int = 64,
    tol: float = 1e-5,
) -> np.ndarray:
    """Solve sum_j exp(-max(0, d_j - rho) / sigma) = target per row.

    Bisection with an unbounded upper end, expanded by doubling until it
    brackets the target (the smooth-kNN calibration used by fuzzy graphs).
    Returns the raw sigma; clamping happens in the caller.
    """
    n = knn_dists.shape[0]
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    mid = np.ones(n)
    shifted = np.maximum(knn_dists - rho[:, None], 0.0)
    done = np.zeros(n, dtype=bool)
    for _ in range(n_iter):
        psum = np.exp(-shifted / mid[:, None]).sum(axis=1)
        done |= np.abs(psum - target) < tol
        high = psum > target
        hi = np.where(~done & high, mid, hi)
        lo = np.where(~done & ~high, mid, lo)
        grow = ~done & ~high & np.isinf(hi)
        new_mid = np.where(grow, mid * 2.0, (lo + hi) / 2.0)
        mid = np.where(done, mid, new_mid)
    return mid


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    """Accumulate ``vals`` rows into ``out`` rows at ``idx`` (in-place)."""
    np.add.at(out, idx, vals)
