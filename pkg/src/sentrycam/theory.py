"""Empirical harness for the sampling-theory claims.

Samplers for simple manifolds with known geometry, a covering-radius
estimator against a dense reference, the covering-radius / k-NN-distance
equivalence check, and the tipping-curve experiment that sweeps sampling
ratios and watches embedding quality fall off a cliff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .graph import SpatioTemporalGraph, fuzzy_spatial_edges
from .ingest import synth_trajectory
from .projection import TrainConfig, encode, train
from .sampling import random_sample

MANIFOLD_KINDS = ("circle", "sphere", "clusters")


@dataclass(frozen=True)
class ManifoldSample:
    kind: str
    points: np.ndarray
    intrinsic_dim: int
    ambient_dim: int


def sample_manifold(
    kind: str,
    n: int,
    ambient: int | None = None,
    noise: float = 0.0,
    seed: int = 0,
    classes: int = 10,
) -> ManifoldSample:
    """Uniform sample of a unit circle, unit sphere, or Gaussian clusters."""
    if kind not in MANIFOLD_KINDS:
        raise ValueError(f"unknown manifold kind {kind!r}, expected one of {MANIFOLD_KINDS}")
    if n < 10:
        raise ValueError("need at least 10 points")
    rng = np.random.default_rng(seed)
    if kind == "circle":
        h = 2 if ambient is None else ambient
        if h < 2:
            raise ValueError("circle needs ambient dimension >= 2")
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        pts = np.zeros((n, h))
        pts[:, 0] = np.cos(theta)
        pts[:, 1] = np.sin(theta)
        intrinsic = 1
    elif kind == "sphere":
        h = 3 if ambient is None else ambient
        if h < 3:
            raise ValueError("sphere needs ambient dimension >= 3")
        raw = rng.standard_normal((n, 3))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        pts = np.zeros((n, h))
        pts[:, :3] = raw
        intrinsic = 2
    else:
        h = 64 if ambient is None else ambient
        per_class = max(1, n // classes)
        snap = synth_trajectory(
            "stable", epochs=1, n_per_class=per_class, classes=classes, dim=h, seed=seed
        )[0]
        pts = np.asarray(snap.matrix, dtype=np.float64)[:n]
        intrinsic = h
    if noise > 0.0:
        pts = pts + noise * rng.standard_normal(pts.shape)
    return ManifoldSample(kind=kind, points=pts, intrinsic_dim=intrinsic, ambient_dim=pts.shape[1])


def covering_radius(sample: np.ndarray, reference: np.ndarray) -> float:
    """sup over the reference of the distance to the nearest sample point."""
    sample = np.asarray(sample, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if sample.size == 0:
        raise ValueError("sample must be non-empty")
    return kernels.covering_radius(reference, sample)


def circle_reference(n: int) -> np.ndarray:
    """Deterministic dense reference for the unit circle."""
    theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.column_stack([np.cos(theta), np.sin(theta)])


@dataclass(frozen=True)
class EquivalenceReport:
    sizes: tuple[int, ...]
    ratios: np.ndarray  # (n_sizes, n_seeds) covering radius / avg k-NN distance
    spread: float       # max/min of the per-size mean ratios

    @property
    def mean_per_size(self) -> np.ndarray:
        return self.ratios.mean(axis=1)


def equivalence_check(
    kind: str,
    sizes: tuple[int, ...] | list[int],
    k: int,
    seeds: int = 1,
    seed: int = 0,
    reference_n: int | None = None,
) -> EquivalenceReport:
    """Ratio of covering radius to average k-NN distance across sample sizes.

    Bounded spread across a wide size range is the empirical form of the
    two quantities being equivalent up to constants on a fixed manifold.
    """
    sizes = tuple(int(s) for s in sizes)
    if any(s < 4 * k for s in sizes):
        raise ValueError("sizes must be at least 4k")
    ref_n = reference_n or max(10 * max(sizes), 20000)
    if kind == "circle":
        reference = circle_reference(ref_n)
    else:
        reference = sample_manifold(kind, ref_n, seed=seed + 99991).points
    ratios = np.empty((len(sizes), seeds))
    for si, size in enumerate(sizes):
        for sj in range(seeds):
            pts = sample_manifold(kind, size, seed=seed + 7919 * sj + si).points
            eps = covering_radius(pts, reference)
            dbar = kernels.avg_kth_nn_distance(pts, k)
            ratios[si, sj] = eps / dbar
    means = ratios.mean(axis=1)
    return EquivalenceReport(
        sizes=sizes, ratios=ratios, spread=float(means.max() / means.min())
    )


@dataclass(frozen=True)
class TippingCurve:
    """Per-ratio density and embedding quality, plus the detected knee."""

    ratios: tuple[float, ...]
    rel_density: tuple[float, ...]
    preservation: tuple[float, ...]
    knee_ratio: float

    def to_csv(self) -> str:
        lines = ["ratio,rel_density,preservation"]
        for r, d, p in zip(self.ratios, self.rel_density, self.preservation):
            lines.append(f"{r!r},{d!r},{p!r}")
        return "\n".join(lines) + "\n"


def _spatial_only_graph(points: np.ndarray, k: int) -> SpatioTemporalGraph:
    si, sj, sw = fuzzy_spatial_edges(points, k)
    n = points.shape[0]
    empty = np.empty(0, dtype=np.int64)
    return SpatioTemporalGraph(
        points=np.asarray(points, dtype=np.float64),
        epochs=np.zeros(n, dtype=np.int64),
        source_index=np.arange(n, dtype=np.int64),
        spatial_i=si,
        spatial_j=sj,
        spatial_w=sw,
        temporal_i=empty,
        temporal_j=empty.copy(),
        temporal_w=np.empty(0, dtype=np.float64),
        knn_k=k,
    )


def tipping_curve(
    points: np.ndarray,
    ratios: tuple[float, ...] | list[float],
    k: int = 15,
    seed: int = 0,
    train_cfg: TrainConfig | None = None,
    probe_cfg: TrainConfig | None = None,
    knee_fraction: float = 0.9,
) -> TippingCurve:
    """Sweep sampling ratios: subsample, embed, score against the full data.

    A reference projection is first trained on the full point set
    (``train_cfg``); each ratio then continues training from that reference
    on its subsample's spatial graph (``probe_cfg``, an equal budget for
    every ratio) — exactly the warm-start regime the live pipeline runs in.
    On the stability plateau the probe preserves the reference's quality;
    past the tipping point the subsample's k-NN graph bridges unrelated
    regions and actively destroys it. Preservation is measured on the
    *full* point set pushed through each probed model. The knee is the
    largest ratio whose preservation falls below ``knee_fraction`` of the
    first (largest) ratio's value, or the smallest probed ratio if none
    does.
    """
    ratios = tuple(float(r) for r in ratios)
    if not ratios or any(not 0.0 < r <= 1.0 for r in ratios):
        raise ValueError("ratios must be within (0, 1]")
    if any(b >= a for a, b in zip(ratios, ratios[1:])):
        raise ValueError("ratios must be strictly decreasing")
    points = np.asarray(points, dtype=np.float64)
    cfg = train_cfg or TrainConfig(
        epochs=8, batch_edges=512, steps_per_epoch=500, seed=seed
    )
    pcfg = probe_cfg or replace(cfg, steps_per_epoch=150)

    if points.shape[0] <= k:
        raise ValueError(f"need more than k={k} points")
    reference = train(_spatial_only_graph(points, k), cfg).model

    dbar_full = kernels.avg_kth_nn_distance(points, k)
    idx_high, _ = kernels.knn(points, k)  # shared across ratios
    densities = []
    preservations = []
    for pi, ratio in enumerate(ratios):
        rng = np.random.default_rng(np.random.SeedSequence([seed, pi]))
        idx = random_sample(points.shape[0], ratio, rng)
        sub = points[idx]
        if sub.shape[0] <= k:
            raise ValueError(
                f"ratio {ratio} leaves {sub.shape[0]} points, need more than k={k}"
            )
        dbar_sub = kernels.avg_kth_nn_distance(sub, k)
        densities.append(1.0 if dbar_sub == 0.0 else dbar_full / dbar_sub)
        g = _spatial_only_graph(sub, k)
        result = train(g, pcfg, model=reference)
        coords = encode(result.model, points)
        idx_low, _ = kernels.knn(coords, k)
        overlap = np.mean(
            [
                np.intersect1d(idx_high[i], idx_low[i], assume_unique=True).size
                for i in range(points.shape[0])
            ]
        )
        preservations.append(float(overlap) / k)

    base = preservations[0]
    knee = ratios[-1]
    for ratio, pres in zip(ratios, preservations):
        if pres < knee_fraction * base:
            knee = ratio
            break
    return TippingCurve(
        ratios=ratios,
        rel_density=tuple(densities),
        preservation=tuple(preservations),
        knee_ratio=knee,
    )
