"""Fidelity metrics for embedding sequences.

Three views of how faithful a 2-D embedding is to its source activations:
neighborhood overlap within one epoch, prediction agreement after a
round-trip through the decoder, and rank correlation of each sample's
movement across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import kernels


class PreservationResult(NamedTuple):
    fraction: float   # mean |overlap| / k
    mean_count: float  # mean |overlap|


def intraslice_preservation(
    high: np.ndarray, low: np.ndarray, k: int
) -> PreservationResult:
    """How many of each point's k nearest neighbors survive the projection."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    if high.shape[0] != low.shape[0]:
        raise ValueError("high and low must hold the same points")
    idx_h, _ = kernels.knn(high, k)
    idx_l, _ = kernels.knn(low, k)
    overlap = np.empty(high.shape[0])
    for i in range(high.shape[0]):
        overlap[i] = np.intersect1d(idx_h[i], idx_l[i], assume_unique=True).size
    mean_count = float(overlap.mean())
    return PreservationResult(fraction=mean_count / k, mean_count=mean_count)


class NearestCentroidPredictor:
    """Default pluggable predictor: label of the closest class centroid."""

    def __init__(self, points: np.ndarray, labels: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        labels = np.asarray(labels)
        self.classes = np.unique(labels)
        self.centroids = np.stack(
            [points[labels == c].mean(axis=0) for c in self.classes]
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = kernels.pairwise_sq_dists(x, self.centroids)
        return self.classes[np.argmin(d, axis=1)]


def reconstruction_accuracy(
    original: np.ndarray,
    reconstructed: np.ndarray,
    predictor: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Fraction of rows whose prediction survives reconstruction."""
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ValueError("original and reconstructed must have the same shape")
    return float(np.mean(np.asarray(predictor(original)) == np.asarray(predictor(reconstructed))))


class SpearmanResult(NamedTuple):
    rho: float
    degenerate: bool  # a constant input makes the coefficient undefined


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(r1: np.ndarray, r2: np.ndarray) -> SpearmanResult:
    """Rank correlation with average ranks for ties; 0 (flagged) if constant."""
    a = np.asarray(r1, dtype=np.float64)
    b = np.asarray(r2, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length vectors of at least 2 entries")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    sa = ra - ra.mean()
    sb = rb - rb.mean()
    va = float(sa @ sa)
    vb = float(sb @ sb)
    if va == 0.0 or vb == 0.0:
        return SpearmanResult(rho=0.0, degenerate=True)
    return SpearmanResult(rho=float((sa @ sb) / np.sqrt(va * vb)), degenerate=False)


@dataclass(frozen=True)
class IntersliceResult:
    per_sample: np.ndarray
    mean: float
    degenerate: int  # samples whose rankings were constant


def interslice_correlation(
    high_traj: np.ndarray,
    low_traj: np.ndarray,
    anchor: int = -1,
    high_metric: str = "cosine",
) -> IntersliceResult:
    """Does the embedding move samples the way the activations move?

    For each sample, the non-anchor epochs are ranked by distance to the
    anchor epoch's position — cosine in the high-dimensional space (raw
    cross-epoch magnitudes are not comparable), Euclidean in 2-D — and the
    two rankings are rank-correlated.
    """
    high = np.asarray(high_traj, dtype=np.float64)
    low = np.asarray(low_traj, dtype=np.float64)
    if high.ndim != 3 or low.ndim != 3 or high.shape[:2] != low.shape[:2]:
        raise ValueError("trajectories must be (n_samples, n_epochs, dim) and aligned")
    n, t = high.shape[:2]
    if t < 3:
        raise ValueError("need at least 3 epochs")
    anchor = anchor % t
    others = [e for e in range(t) if e != anchor]

    if high_metric == "cosine":
        norms = np.linalg.norm(high, axis=2, keepdims=True)
        hn = np.divide(high, norms, out=np.zeros_like(high), where=norms > 0.0)
        d_high = 1.0 - np.einsum("ned,nd->ne", hn[:, others], hn[:, anchor])
    elif high_metric == "euclidean":
        d_high = np.linalg.norm(high[:, others] - high[:, anchor : anchor + 1], axis=2)
    else:
        raise ValueError(f"unknown high_metric {high_metric!r}")
    d_low = np.linalg.norm(low[:, others] - low[:, anchor : anchor + 1], axis=2)

    rhos = np.empty(n)
    degenerate = 0
    for i in range(n):
        res = spearman(d_high[i], d_low[i])
        rhos[i] = res.rho
        degenerate += int(res.degenerate)
    return IntersliceResult(per_sample=rhos, mean=float(rhos.mean()), degenerate=degenerate)


@dataclass(frozen=True)
class FidelityReport:
    """Per-epoch fidelity numbers plus the cross-epoch correlation."""

    epochs: tuple[int, ...]
    preservation_fraction: tuple[float, ...]
    preservation_count: tuple[float, ...]
    reconstruction: tuple[float, ...]
    interslice_mean: float | None
    interslice_per_sample: np.ndarray | None

    def to_csv(self) -> str:
        lines = ["epoch,preservation_fraction,preservation_count,reconstruction_accuracy"]
        for e, f, c, r in zip(
            self.epochs, self.preservation_fraction, self.preservation_count, self.reconstruction
        ):
            lines.append(f"{e},{f!r},{c!r},{r!r}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "epochs": list(self.epochs),
            "preservation_fraction": list(self.preservation_fraction),
            "preservation_count": list(self.preservation_count),
            "reconstruction_accuracy": list(self.reconstruction),
            "interslice_mean": self.interslice_mean,
            "interslice_per_sample": (
                None
                if self.interslice_per_sample is None
                else [float(v) for v in self.interslice_per_sample]
            ),
        }
