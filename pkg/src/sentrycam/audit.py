"""Geometric health metrics, smoothing and early-warning alerts.

Two cluster-health metrics are tracked per epoch — separation (mean
pairwise centroid distance) and cohesion (mean within-class mean squared
distance to the centroid) — on embeddings or raw activations alike. Each
smoothed series raises an alert at the first epoch where it has moved in
its unhealthy direction for k consecutive epochs and the latest move
clears a volatility-scaled margin. The run-level alert is the earliest of
the two; a surrogate loss series can be audited alongside for lead-time
comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import NearestCentroidPredictor


def inter_cluster_distance(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean pairwise Euclidean distance between class centroids."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least 2 non-empty classes")
    centroids = np.stack([points[labels == c].mean(axis=0) for c in classes])
    total = 0.0
    count = 0
    for i in range(classes.size):
        deltas = centroids[i + 1 :] - centroids[i]
        total += float(np.sqrt((deltas * deltas).sum(axis=1)).sum())
        count += deltas.shape[0]
    return total / count


def intra_cluster_variance(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean over classes of the mean squared distance to the class centroid."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 1:
        raise ValueError("need at least one class")
    values = []
    for c in classes:
        member = points[labels == c]
        centroid = member.mean(axis=0)
        deltas = member - centroid
        values.append(float((deltas * deltas).sum(axis=1).mean()))
    return float(np.mean(values))


def smooth(series: Sequence[float], factor: float) -> np.ndarray:
    """Exponential moving average; factor 1 is the identity."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("factor must be in (0, 1]")
    series = np.asarray(series, dtype=np.float64)
    out = np.empty_like(series)
    if series.size == 0:
        return out
    out[0] = series[0]
    for i in range(1, series.size):
        out[i] = factor * series[i] + (1.0 - factor) * out[i - 1]
    return out


@dataclass(frozen=True)
class AlertConfig:
    consecutive: int = 2       # k epochs of sustained degradation
    margin_fraction: float = 0.25
    window: int = 10           # volatility window for the margin
    smoothing: float = 0.5

    def __post_init__(self):
        if self.consecutive < 1:
            raise ValueError("consecutive must be >= 1")
        if self.margin_fraction < 0:
            raise ValueError("margin_fraction must be >= 0")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing must be in (0, 1]")


@dataclass(frozen=True)
class AlertRecord:
    metric: str
    epoch: int              # index into the audited series
    direction: str          # unhealthy direction that fired
    delta: float            # s[t] - s[t-1] at the trigger
    margin: float           # alpha * sigma at the trigger


def check_alert(
    smoothed: Sequence[float],
    unhealthy_direction: str,
    cfg: AlertConfig,
    metric: str = "",
) -> AlertRecord | None:
    """First epoch with k consecutive unhealthy moves clearing the margin.

    The margin is margin_fraction times the standard deviation of the
    smoothed series over the up-to-``window`` epochs preceding the
    candidate epoch.
    """
    if unhealthy_direction not in ("increase", "decrease"):
        raise ValueError("unhealthy_direction must be 'increase' or 'decrease'")
    s = np.asarray(smoothed, dtype=np.float64)
    if s.size < cfg.consecutive + 1:
        raise ValueError(f"series must have at least {cfg.consecutive + 1} entries")
    deltas = np.diff(s)
    unhealthy = deltas > 0 if unhealthy_direction == "increase" else deltas < 0
    k = cfg.consecutive
    for t in range(k, s.size):
        if not unhealthy[t - k : t].all():
            continue
        sigma = float(np.std(s[max(0, t - cfg.window) : t]))
        margin = cfg.margin_fraction * sigma
        if abs(s[t] - s[t - 1]) > margin:
            return AlertRecord(
                metric=metric,
                epoch=t,
                direction=unhealthy_direction,
                delta=float(s[t] - s[t - 1]),
                margin=margin,
            )
    return None


@dataclass(frozen=True)
class HealthSeries:
    epochs: tuple[int, ...]
    inter_cluster: tuple[float, ...]
    intra_cluster: tuple[float, ...]
    inter_smooth: tuple[float, ...]
    intra_smooth: tuple[float, ...]
    surrogate_loss: tuple[float, ...] | None = None
    surrogate_smooth: tuple[float, ...] | None = None

    def to_csv(self) -> str:
        header = "epoch,inter_cluster_distance,intra_cluster_variance,inter_smooth,intra_smooth"
        with_loss = self.surrogate_loss is not None
        if with_loss:
            header += ",surrogate_loss,surrogate_smooth"
        lines = [header]
        for i, e in enumerate(self.epochs):
            row = (
                f"{e},{self.inter_cluster[i]!r},{self.intra_cluster[i]!r},"
                f"{self.inter_smooth[i]!r},{self.intra_smooth[i]!r}"
            )
            if with_loss:
                row += f",{self.surrogate_loss[i]!r},{self.surrogate_smooth[i]!r}"
            lines.append(row)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class IdealRegion:
    """Top-quintile separation and bottom-quintile cohesion over the run."""

    inter_floor: float   # 80th percentile of inter-cluster distance
    intra_ceiling: float  # 20th percentile of intra-cluster variance
    epochs_inside: tuple[int, ...]


@dataclass(frozen=True)
class AuditResult:
    health: HealthSeries
    alerts: tuple[AlertRecord, ...]
    geometry_alert: AlertRecord | None   # earliest of the two health alerts
    loss_alert: AlertRecord | None
    ideal_region: IdealRegion
    notes: tuple[str, ...] = ()


def surrogate_loss_series(
    point_sets: Sequence[np.ndarray], label_sets: Sequence[np.ndarray]
) -> np.ndarray:
    """Nearest-centroid error rate per epoch: the conventional-signal stand-in."""
    out = np.empty(len(point_sets))
    for i, (points, labels) in enumerate(zip(point_sets, label_sets)):
        predictor = NearestCentroidPredictor(points, labels)
        out[i] = float(np.mean(predictor(points) != np.asarray(labels)))
    return out


def audit_run(
    point_sets: Sequence[np.ndarray],
    label_sets: Sequence[np.ndarray],
    cfg: AlertConfig = AlertConfig(),
    epochs: Sequence[int] | None = None,
    surrogate_loss: Sequence[float] | None = None,
) -> AuditResult:
    """Audit one run's per-epoch point sets (embeddings or raw activations).

    Separation alerts on decrease, cohesion on increase; the run's
    geometry alert is the earlier of the two. Alert epochs are reported in
    the caller's epoch numbering (``epochs``, default 0..T-1). The ideal
    region is computed post hoc from the raw metric values. Epochs where
    separation is undefined (fewer than 2 classes) become NaN and disable
    the separation alert, with a note; cohesion is always audited.
    """
    n = len(point_sets)
    if n < 2:
        raise ValueError("need at least 2 epochs to audit")
    if len(label_sets) != n:
        raise ValueError("one label set per epoch required")
    epoch_ids = tuple(range(n)) if epochs is None else tuple(int(e) for e in epochs)
    if len(epoch_ids) != n:
        raise ValueError("epochs must align with point_sets")

    notes: list[str] = []
    inter = np.empty(n)
    for i, (p, l) in enumerate(zip(point_sets, label_sets)):
        try:
            inter[i] = inter_cluster_distance(p, l)
        except ValueError as exc:
            inter[i] = np.nan
            notes.append(f"epoch {epoch_ids[i]}: inter_cluster_distance undefined: {exc}")
    intra = np.array([intra_cluster_variance(p, l) for p, l in zip(point_sets, label_sets)])
    inter_s = smooth(inter, cfg.smoothing)
    intra_s = smooth(intra, cfg.smoothing)

    alerts: list[AlertRecord] = []
    candidates: list[AlertRecord] = []
    if n >= cfg.consecutive + 1:
        checks = [("intra_cluster_variance", intra_s, "increase")]
        if np.isfinite(inter).all():
            checks.insert(0, ("inter_cluster_distance", inter_s, "decrease"))
        for name, series, direction in checks:
            rec = check_alert(series, direction, cfg, metric=name)
            if rec is not None:
                rec = AlertRecord(
                    metric=rec.metric,
                    epoch=epoch_ids[rec.epoch],
                    direction=rec.direction,
                    delta=rec.delta,
                    margin=rec.margin,
                )
                alerts.append(rec)
                candidates.append(rec)
    geometry_alert = min(candidates, key=lambda r: r.epoch, default=None)

    loss_alert = None
    loss_smooth = None
    loss_tuple = None
    if surrogate_loss is not None:
        loss_arr = np.asarray(surrogate_loss, dtype=np.float64)
        if loss_arr.size != n:
            raise ValueError("surrogate_loss must align with point_sets")
        loss_smooth_arr = smooth(loss_arr, cfg.smoothing)
        rec = check_alert(loss_smooth_arr, "increase", cfg, metric="surrogate_loss")
        if rec is not None:
            loss_alert = AlertRecord(
                metric=rec.metric,
                epoch=epoch_ids[rec.epoch],
                direction=rec.direction,
                delta=rec.delta,
                margin=rec.margin,
            )
            alerts.append(loss_alert)
        loss_tuple = tuple(float(v) for v in loss_arr)
        loss_smooth = tuple(float(v) for v in loss_smooth_arr)

    finite_inter = inter[np.isfinite(inter)]
    inter_floor = float(np.percentile(finite_inter, 80)) if finite_inter.size else float("nan")
    intra_ceiling = float(np.percentile(intra, 20))
    inside = tuple(
        epoch_ids[i]
        for i in range(n)
        if np.isfinite(inter[i]) and inter[i] >= inter_floor and intra[i] <= intra_ceiling
    )

    health = HealthSeries(
        epochs=epoch_ids,
        inter_cluster=tuple(float(v) for v in inter),
        intra_cluster=tuple(float(v) for v in intra),
        inter_smooth=tuple(float(v) for v in inter_s),
        intra_smooth=tuple(float(v) for v in intra_s),
        surrogate_loss=loss_tuple,
        surrogate_smooth=loss_smooth,
    )
    return AuditResult(
        health=health,
        alerts=tuple(sorted(alerts, key=lambda r: (r.epoch, r.metric))),
        geometry_alert=geometry_alert,
        loss_alert=loss_alert,
        ideal_region=IdealRegion(
            inter_floor=inter_floor, intra_ceiling=intra_ceiling, epochs_inside=inside
        ),
        notes=tuple(notes),
    )
