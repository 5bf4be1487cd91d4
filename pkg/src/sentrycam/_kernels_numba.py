"""Numba-jitted twins of the hot kernels in ``_kernels_numpy``.

Importing this module requires numba; ``kernels`` falls back to the numpy
path when it is unavailable or when SENTRYCAM_BACKEND=numpy.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def topk_block(dist_block, k):  # pragma: no cover - exercised via kernels API
    n, m = dist_block.shape
    idx = np.empty((n, k), dtype=np.int64)
    vals = np.empty((n, k), dtype=np.float64)
    for i in prange(n):
        bd = np.full(k, np.inf)
        bi = np.full(k, np.int64(2**62), dtype=np.int64)
        for j in range(m):
            d = dist_block[i, j]
            # lexicographic (distance, column) ordering gives the
            # smaller-index tie rule for free
            if d < bd[k - 1] or (d == bd[k - 1] and j < bi[k - 1]):
                pos = k - 1
                while pos > 0 and (
                    d < bd[pos - 1] or (d == bd[pos - 1] and j < bi[pos - 1])
                ):
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                    pos -= 1
                bd[pos] = d
                bi[pos] = j
        idx[i] = bi
        vals[i] = bd
    return idx, vals


@njit(cache=True, parallel=True)
def kth_smallest_block(dist_block, kth):  # pragma: no cover
    n, m = dist_block.shape
    out = np.empty(n, dtype=np.float64)
    size = kth + 1
    for i in prange(n):
        best = np.full(size, np.inf)
        for j in range(m):
            d = dist_block[i, j]
            if d < best[size - 1]:
                pos = size - 1
                while pos > 0 and d < best[pos - 1]:
                    best[pos] = best[pos - 1]
                    pos -= 1
                best[pos] = d
        out[i] = best[size - 1]
    return out


@njit(cache=True, parallel=True)
def sigma_bisect(knn_dists, rho, target, n_iter, tol):  # pragma: no cover
    n, k = knn_dists.shape
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        lo = 0.0
        hi = np.inf
        mid = 1.0
        for _ in range(n_iter):
            psum = 0.0
            for j in range(k):
                d = knn_dists[i, j] - rho[i]
                if d < 0.0:
                    d = 0.0
                psum += np.exp(-d / mid)
            if abs(psum - target) < tol:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                if hi == np.inf:
                    mid *= 2.0
                else:
                    mid = (lo + hi) / 2.0
        out[i] = mid
    return out


@njit(cache=True)
def scatter_add_rows(out, idx, vals):  # pragma: no cover
    # serial on purpose: fixed accumulation order keeps results deterministic
    for e in range(idx.shape[0]):
        row = idx[e]
        for c in range(vals.shape[1]):
            out[row, c] += vals[e, c]
