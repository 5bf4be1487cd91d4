"""Backend-dispatched numeric kernels.

Two interchangeable backends implement the per-row selection, calibration
and scatter primitives: numba-jitted loops (default when numba imports) and
pure numpy. Select with the SENTRYCAM_BACKEND environment variable
("numba" or "numpy") or :func:`set_backend`. Distance matrices themselves
are always built through BLAS — naive loops cannot compete with a gram
product at the feature widths this package sees.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_numpy
from .errors import InsufficientPointsError

# the bundled TBB is often too old for numba; omp avoids a noisy warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    from . import _kernels_numba

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _kernels_numba = None
    _HAS_NUMBA = False

_BLOCK_ELEMENTS = 4_000_000  # ~32 MB of float64 per distance block


def _resolve_backend(name: str | None):
    if name is None:
        name = os.environ.get("SENTRYCAM_BACKEND", "").strip().lower() or (
            "numba" if _HAS_NUMBA else "numpy"
        )
    if name == "numpy":
        return name, _kernels_numpy
    if name == "numba":
        if not _HAS_NUMBA:
            raise RuntimeError("SENTRYCAM_BACKEND=numba but numba is not importable")
        return name, _kernels_numba
    raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")


_BACKEND_NAME, _IMPL = _resolve_backend(None)


def active_backend() -> str:
    """Name of the backend currently answering kernel calls."""
    return _BACKEND_NAME


def set_backend(name: str) -> str:
    """Switch backends at runtime; returns the previous backend name."""
    global _BACKEND_NAME, _IMPL
    previous = _BACKEND_NAME
    _BACKEND_NAME, _IMPL = _resolve_backend(name)
    return previous


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs so timed paths stay honest."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    knn(pts, 1)
    avg_kth_nn_distance(pts, 1)
    smooth_knn_sigma(np.array([[0.5, 1.0]]), np.array([0.5]), 1.0)
    out = np.zeros((2, 2))
    scatter_add(out, np.array([0, 1, 0]), np.ones((3, 2)))


def _as_f64(points: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(points, dtype=np.float64)


def _sq_dist_block(block: np.ndarray, points: np.ndarray, sq: np.ndarray, sq_block: np.ndarray) -> np.ndarray:
    d = sq_block[:, None] + sq[None, :] - 2.0 * (block @ points.T)
    np.maximum(d, 0.0, out=d)
    return d


def _row_blocks(n: int, m: int) -> int:
    return max(1, min(n, _BLOCK_ELEMENTS // max(m, 1)))


def knn(points: np.ndarray, k: int, metric: str = "euclidean") -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors of every point, self excluded.

    Distances come back sorted ascending; exact ties resolve to the smaller
    index. Cosine uses 1 - cos(x, y) as the distance, with zero-norm rows
    treated as similarity 0 to everything.
    """
    points = _as_f64(points)
    n = points.shape[0]
    if n <= k:
        raise InsufficientPointsError(f"k-NN with k={k} needs more than k points, got {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if metric == "euclidean":
        base = points
        sq = np.einsum("ij,ij->i", base, base)
    elif metric == "cosine":
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        safe = np.where(norms > 0.0, norms, 1.0)
        base = points / safe
        sq = None
    else:
        raise ValueError(f"unknown metric {metric!r}")

    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    step = _row_blocks(n, n)
    for start in range(0, n, step):
        stop = min(start + step, n)
        if metric == "euclidean":
            block = _sq_dist_block(base[start:stop], base, sq, sq[start:stop])
        else:
            block = 1.0 - base[start:stop] @ base.T
        block[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        bi, bv = _IMPL.topk_block(block, k)
        idx[start:stop] = bi
        dist[start:stop] = np.sqrt(bv) if metric == "euclidean" else bv
    return idx, dist


def avg_kth_nn_distance(points: np.ndarray, k: int) -> float:
    """Mean over points of the Euclidean distance to the k-th nearest neighbor."""
    points = _as_f64(points)
    n = points.shape[0]
    if n <= k:
        raise InsufficientPointsError(
            f"k-th neighbor distance with k={k} needs more than k points, got {n}"
        )
    sq = np.einsum("ij,ij->i", points, points)
    total = 0.0
    step = _row_blocks(n, n)
    for start in range(0, n, step):
        stop = min(start + step, n)
        block = _sq_dist_block(points[start:stop], points, sq, sq[start:stop])
        block[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        total += float(np.sqrt(_IMPL.kth_smallest_block(block, k - 1)).sum())
    return total / n


def smooth_knn_sigma(
    knn_dists: np.ndarray,
    rho: np.ndarray,
    target: float,
    n_iter: int = 64,
    tol: float = 1e-5,
) -> np.ndarray:
    """Per-row bandwidth solving the smooth-kNN calibration equation.

    The returned sigma is clamped to [1e-3, 1e3] times the row's mean
    neighbor distance; rows whose distances are all zero get sigma 1.0
    (any bandwidth yields identical weights there).
    """
    knn_dists = np.ascontiguousarray(knn_dists, dtype=np.float64)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    sig = _IMPL.sigma_bisect(knn_dists, rho, float(target), n_iter, tol)
    means = knn_dists.mean(axis=1)
    lo = 1e-3 * means
    hi = 1e3 * means
    sig = np.clip(sig, lo, hi)
    return np.where(means > 0.0, sig, 1.0)


def scatter_add(out: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    """out[idx[e]] += vals[e] for every e, with a deterministic order."""
    _IMPL.scatter_add_rows(out, np.ascontiguousarray(idx, dtype=np.int64),
                           np.ascontiguousarray(vals, dtype=np.float64))


def covering_radius(reference: np.ndarray, sample: np.ndarray) -> float:
    """Largest distance from any reference point to its nearest sample point.

    Uses the direct difference formula rather than a gram product: the
    cancellation noise of the latter would put a ~1e-8 floor under what
    should be exact zeros (e.g. sample == reference).
    """
    reference = _as_f64(reference)
    sample = _as_f64(sample)
    if sample.shape[0] == 0:
        raise ValueError("sample must be non-empty")
    m, d = sample.shape
    worst = 0.0
    step = max(1, _BLOCK_ELEMENTS // max(m * d, 1))
    for start in range(0, reference.shape[0], step):
        block = reference[start : start + step]
        diff = block[:, None, :] - sample[None, :, :]
        dist_sq = np.einsum("bmd,bmd->bm", diff, diff)
        worst = max(worst, float(dist_sq.min(axis=1).max()))
    return float(np.sqrt(worst))


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense squared Euclidean distances between two point sets."""
    a = _as_f64(a)
    b = _as_f64(b)
    d = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(d, 0.0, out=d)
    return d


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity matrix; zero-norm rows contribute similarity 0."""
    a = _as_f64(a)
    b = _as_f64(b)
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    an = np.divide(a, na, out=np.zeros_like(a), where=na > 0.0)
    bn = np.divide(b, nb, out=np.zeros_like(b), where=nb > 0.0)
    return an @ bn.T
