"""Density statistics and the optimal-sampling-ratio search.

The scale-free density of a subsample is the ratio of the full set's
average k-th-neighbor distance to the subsample's: 1.0 for the full set,
shrinking toward 0 as pruning thins the data. A subsample is accepted
when that ratio stays above a threshold, and a binary search homes in on
the most aggressive ratio that still passes — the edge of the stability
plateau before neighborhood structure collapses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientPointsError


def avg_knn_distance(points: np.ndarray, k: int) -> float:
    """Mean distance to the k-th nearest neighbor (self excluded)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if points.shape[0] <= k:
        raise InsufficientPointsError(
            f"need more than k={k} points, got {points.shape[0]}"
        )
    return kernels.avg_kth_nn_distance(points, k)


@dataclass(frozen=True)
class DensityReport:
    """Average k-NN distances of a subsample vs its parent set."""

    k: int
    dbar_sample: float
    dbar_full: float
    rel_density: float


def _density_ratio(dbar_full: float, dbar_sample: float) -> float:
    if dbar_sample == 0.0:
        # all-duplicate sample: lossless by convention when the full set is
        # also degenerate, infinitely dense otherwise
        return 1.0 if dbar_full == 0.0 else math.inf
    return dbar_full / dbar_sample


def _is_row_subset(sample: np.ndarray, full: np.ndarray) -> bool:
    counts: dict[bytes, int] = {}
    for row in np.ascontiguousarray(full, dtype=np.float64):
        key = row.tobytes()
        counts[key] = counts.get(key, 0) + 1
    for row in np.ascontiguousarray(sample, dtype=np.float64):
        key = row.tobytes()
        left = counts.get(key, 0)
        if left == 0:
            return False
        counts[key] = left - 1
    return True


def relative_density(sample: np.ndarray, full: np.ndarray, k: int) -> DensityReport:
    """Scale-free density of ``sample`` relative to ``full``; 1.0 when equal."""
    sample = np.asarray(sample, dtype=np.float64)
    full = np.asarray(full, dtype=np.float64)
    if sample.shape[0] <= k or full.shape[0] <= k:
        raise InsufficientPointsError(
            f"both sets need more than k={k} points "
            f"(got {sample.shape[0]} and {full.shape[0]})"
        )
    if sample.shape[0] > full.shape[0] or not _is_row_subset(sample, full):
        raise ValueError("sample must be a subset of full")
    dbar_sample = kernels.avg_kth_nn_distance(sample, k)
    dbar_full = kernels.avg_kth_nn_distance(full, k)
    return DensityReport(
        k=k,
        dbar_sample=dbar_sample,
        dbar_full=dbar_full,
        rel_density=_density_ratio(dbar_full, dbar_sample),
    )


def random_sample(points, ratio: float, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Uniform without-replacement index sample of floor(ratio*n), at least 1.

    ``points`` may be the array itself or its length. Returned indices are
    sorted so downstream consumers see a canonical order.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n = points if isinstance(points, (int, np.integer)) else np.asarray(points).shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    size = max(1, int(math.floor(ratio * n)))
    return np.sort(rng.choice(n, size=size, replace=False))


@dataclass(frozen=True)
class ThresholdReport:
    """Automatic threshold: the requested fraction, in the scale-free form."""

    eta_th: float
    dbar_full: float
    k: int


def auto_threshold(points: np.ndarray, k: int, fraction: float) -> ThresholdReport:
    """Density threshold at ``fraction`` of the full set's own density.

    In the relative formulation the full set has density exactly 1, so the
    fraction is the threshold; the full set's raw k-NN distance is kept for
    reporting.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    return ThresholdReport(
        eta_th=fraction, dbar_full=avg_knn_distance(points, k), k=k
    )


@dataclass(frozen=True)
class SamplingSearchResult:
    """Outcome of the binary search over sampling ratios."""

    optimal_ratio: float
    iterations: int
    reports: tuple[tuple[float, float], ...]
    used_fallback: bool = False

    @property
    def probes(self) -> tuple[float, ...]:
        return tuple(r for r, _ in self.reports)


def _probe_size(ratio: float, n: int, k: int) -> int:
    # density is undefined below k+1 points, so probes clamp there
    return min(n, max(int(math.floor(ratio * n)), k + 1))


def optimal_sampling_ratio(
    points: np.ndarray,
    k: int,
    eta_th: float,
    precision: float = 0.01,
    repeats: int = 3,
    seed: int = 0,
) -> SamplingSearchResult:
    """Binary search for the smallest ratio whose subsamples stay dense enough.

    Each probe draws ``repeats`` seeded subsamples at the midpoint ratio and
    averages their relative density; midpoints at or above ``eta_th`` are
    feasible and the search continues toward more aggressive (smaller)
    ratios, otherwise toward larger ones. The returned ratio is the feasible
    end of the final bracket, i.e. within ``precision`` of the feasibility
    boundary. If no probed ratio is feasible the search falls back to the
    full data (ratio 1.0) and says so.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n <= k:
        raise InsufficientPointsError(f"need more than k={k} points, got {n}")
    if not 0.0 < precision < 1.0:
        raise ValueError("precision must be in (0, 1)")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    dbar_full = kernels.avg_kth_nn_distance(points, k)
    root = np.random.SeedSequence(seed)
    lo, hi = 0.0, 1.0
    feasible_found = False
    reports: list[tuple[float, float]] = []
    iterations = 0
    while hi - lo > precision:
        iterations += 1
        mid = (lo + hi) / 2.0
        size = _probe_size(mid, n, k)
        densities = []
        for child in root.spawn(repeats):
            rng = np.random.default_rng(child)
            idx = np.sort(rng.choice(n, size=size, replace=False))
            dbar_sub = kernels.avg_kth_nn_distance(points[idx], k)
            densities.append(_density_ratio(dbar_full, dbar_sub))
        mean_density = float(np.mean(densities))
        reports.append((mid, mean_density))
        if mean_density >= eta_th:
            feasible_found = True
            hi = mid
        else:
            lo = mid

    if not feasible_found:
        return SamplingSearchResult(
            optimal_ratio=1.0,
            iterations=iterations,
            reports=tuple(reports),
            used_fallback=True,
        )
    return SamplingSearchResult(
        optimal_ratio=hi, iterations=iterations, reports=tuple(reports)
    )
