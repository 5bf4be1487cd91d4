"""Composite spatio-temporal graph construction.

Spatial edges encode the current slice's own k-NN topology as fuzzy
memberships: per-point exponential kernels calibrated to a log2(k) mass
target, symmetrized with the probabilistic t-conorm. Temporal edges tie
the current slice to the working-memory history by cosine similarity,
capped per current node. History slices get no spatial edges of their
own — they act purely as temporal anchors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InsufficientPointsError
from .memory import WorkingMemory
from .sampling import random_sample


def knn(points: np.ndarray, k: int, metric: str = "euclidean"):
    """Exact per-point k nearest neighbors (indices, ascending distances)."""
    return kernels.knn(points, k, metric=metric)


@dataclass(frozen=True)
class LocalScale:
    """Per-point kernel geometry: nearest-neighbor offset and bandwidth."""

    rho: float
    sigma: float


def calibrate_local_scale(knn_distances: np.ndarray, target: float | None = None) -> LocalScale:
    """Bandwidth for one point from its ascending k-NN distances.

    Solves sum_j exp(-max(0, d_j - rho) / sigma) = target (default log2(k))
    by bisection; see :func:`kernels.smooth_knn_sigma` for the clamping.
    """
    d = np.asarray(knn_distances, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise ValueError("need an ascending vector of at least 2 distances")
    if np.any(np.diff(d) < 0):
        raise ValueError("knn distances must be ascending")
    if target is None:
        target = math.log2(d.shape[0])
    rho = float(d[0])
    sigma = kernels.smooth_knn_sigma(d[None, :], np.array([rho]), target)[0]
    return LocalScale(rho=rho, sigma=float(sigma))


def directed_weight(d_ij: float, scale: LocalScale) -> float:
    """Fuzzy membership of a neighbor at distance d_ij, in (0, 1]."""
    return float(np.exp(-max(0.0, d_ij - scale.rho) / scale.sigma))


def symmetrize(p_ij_given: float, p_ji_given: float) -> float:
    """Probabilistic t-conorm of the two directed memberships."""
    return p_ij_given + p_ji_given - p_ij_given * p_ji_given


@dataclass(frozen=True)
class GraphNode:
    point: np.ndarray
    epoch: int
    global_index: int


@dataclass(frozen=True)
class SpatioTemporalGraph:
    """Epoch-tagged nodes with fuzzy spatial edges and cosine temporal edges.

    Edges are stored as parallel arrays; spatial pairs appear once per
    unordered pair with i < j, in sorted order, so construction is
    independent of any internal parallelism.
    """

    points: np.ndarray        # (m, d) float64
    epochs: np.ndarray        # (m,) int64
    source_index: np.ndarray  # (m,) int64, row in the originating snapshot
    spatial_i: np.ndarray
    spatial_j: np.ndarray
    spatial_w: np.ndarray
    temporal_i: np.ndarray
    temporal_j: np.ndarray
    temporal_w: np.ndarray
    knn_k: int

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_current(self) -> int:
        return int(np.sum(self.epochs == self.current_epoch))

    @property
    def current_epoch(self) -> int:
        return int(self.epochs.max(initial=0)) if self.n_nodes else 0

    def node(self, i: int) -> GraphNode:
        return GraphNode(
            point=self.points[i], epoch=int(self.epochs[i]), global_index=int(self.source_index[i])
        )

    def dump_jsonl(self, path: str | Path) -> None:
        """Debug dump: one {type, i, j, w} object per edge."""
        with Path(path).open("w") as fh:
            for i, j, w in zip(self.spatial_i, self.spatial_j, self.spatial_w):
                fh.write(json.dumps({"type": "spatial", "i": int(i), "j": int(j), "w": float(w)}) + "\n")
            for i, j, w in zip(self.temporal_i, self.temporal_j, self.temporal_w):
                fh.write(json.dumps({"type": "temporal", "i": int(i), "j": int(j), "w": float(w)}) + "\n")


def fuzzy_spatial_edges(points: np.ndarray, k: int):
    """Symmetrized fuzzy k-NN edges over one slice.

    Returns (i, j, w) arrays with i < j, sorted lexicographically.
    """
    idx, dist = kernels.knn(points, k, metric="euclidean")
    rho = dist[:, 0]
    sigma = kernels.smooth_knn_sigma(dist, rho, math.log2(k))
    directed = np.exp(-np.maximum(dist - rho[:, None], 0.0) / sigma[:, None])

    n = points.shape[0]
    combined: dict[tuple[int, int], float] = {}
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = idx.reshape(-1)
    vals = directed.reshape(-1)
    for a, b, w in zip(rows, cols, vals):
        key = (int(a), int(b)) if a < b else (int(b), int(a))
        prev = combined.get(key)
        combined[key] = w if prev is None else prev + w - prev * w
    if combined:
        pairs = sorted(combined)
        ei = np.array([p[0] for p in pairs], dtype=np.int64)
        ej = np.array([p[1] for p in pairs], dtype=np.int64)
        ew = np.array([combined[p] for p in pairs], dtype=np.float64)
    else:  # pragma: no cover - k >= 1 always yields edges
        ei = ej = np.empty(0, dtype=np.int64)
        ew = np.empty(0, dtype=np.float64)
    return ei, ej, ew


def temporal_edges(
    current: np.ndarray, history: np.ndarray, per_node_cap: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Strongest positive-cosine links from each current node into history.

    Returns (current_row, history_row, weight); zero-norm vectors have
    cosine 0 everywhere and therefore produce no edges.
    """
    if per_node_cap < 0:
        raise ValueError("per_node_cap must be >= 0")
    n_cur = current.shape[0]
    n_hist = 0 if history is None else history.shape[0]
    if per_node_cap == 0 or n_cur == 0 or n_hist == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0, dtype=np.float64)
    if current.shape[1] != history.shape[1]:
        raise ValueError("current and history must share dimensionality")
    sims = kernels.cosine_similarity(current, history)
    cap = min(per_node_cap, n_hist)
    ei: list[int] = []
    ej: list[int] = []
    ew: list[float] = []
    # stable sort on -sim keeps equal similarities in history-index order
    order = np.argsort(-sims, axis=1, kind="stable")[:, :cap]
    picked = np.take_along_axis(sims, order, axis=1)
    for row in range(n_cur):
        for col in range(cap):
            w = picked[row, col]
            if w <= 0.0:
                break
            ei.append(row)
            ej.append(int(order[row, col]))
            ew.append(float(w))
    return (
        np.array(ei, dtype=np.int64),
        np.array(ej, dtype=np.int64),
        np.array(ew, dtype=np.float64),
    )


def build_graph(
    memory: WorkingMemory,
    k: int,
    sample_ratio: float = 1.0,
    per_node_cap: int = 5,
    seed: int = 0,
) -> SpatioTemporalGraph:
    """Downsample every slice in the memory and wire up the composite graph."""
    sampled_points = []
    sampled_epochs = []
    sampled_source = []
    for snap in memory.snapshots:
        rng = np.random.default_rng(np.random.SeedSequence([seed, snap.epoch]))
        idx = random_sample(snap.n, sample_ratio, rng)
        sampled_points.append(np.asarray(snap.matrix[idx], dtype=np.float64))
        sampled_epochs.append(np.full(idx.shape[0], snap.epoch, dtype=np.int64))
        sampled_source.append(idx.astype(np.int64))

    current_pts = sampled_points[0]
    n_cur = current_pts.shape[0]
    if n_cur <= k:
        raise InsufficientPointsError(
            f"sampled current slice has {n_cur} points, need more than k={k}"
        )

    si, sj, sw = fuzzy_spatial_edges(current_pts, k)

    if len(sampled_points) > 1:
        history_pts = np.concatenate(sampled_points[1:], axis=0)
        ti, tj, tw = temporal_edges(current_pts, history_pts, per_node_cap)
        tj = tj + n_cur  # history node ids live after the current slice
    else:
        ti = tj = np.empty(0, dtype=np.int64)
        tw = np.empty(0, dtype=np.float64)

    return SpatioTemporalGraph(
        points=np.concatenate(sampled_points, axis=0),
        epochs=np.concatenate(sampled_epochs),
        source_index=np.concatenate(sampled_source),
        spatial_i=si,
        spatial_j=sj,
        spatial_w=sw,
        temporal_i=ti,
        temporal_j=tj,
        temporal_w=tw,
        knn_k=k,
    )
