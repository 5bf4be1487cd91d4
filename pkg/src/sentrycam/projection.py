"""Parametric projection model with manual backpropagation.

A fully connected autoencoder maps d-dimensional activations to 2-D and
back. Hidden layers are ReLU(BN(GN(affine))): instance-level group
normalization first, so that batch statistics are computed over already
stabilized rows, then batch normalization for its convergence speed. The
final encoder and decoder layers are plain affine — normalizing a 2-wide
embedding would distort the visualization geometry.

Training minimizes a fuzzy cross-entropy over graph edges (attraction on
sampled positive edges, repulsion against uniform negatives) plus a mean
squared reconstruction term, with AdamW-style updates and a step decay
schedule. All gradients are computed by hand and are verified against
finite differences in the test suite.
"""

from __future__ import annotations

import math
import struct
import time
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from . import kernels
from .errors import CorruptionError, DivergenceError, FormatError, VersionError
from .graph import SpatioTemporalGraph

MODEL_MAGIC = b"SCMM"
MODEL_VERSION = 1

_Q_CLAMP = 1e-7
_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


# ---------------------------------------------------------------------------
# Embedding curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingCurve:
    """Parameters of the low-dimensional membership curve 1/(1 + a*x^(2b))."""

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("curve parameters must be positive")

    def q(self, sq_dist: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + self.a * np.power(sq_dist, self.b))


def fit_curve(min_dist: float = 0.1, spread: float = 1.0) -> EmbeddingCurve:
    """Least-squares fit of the membership curve to the distance falloff.

    The target is 1 inside ``min_dist`` and exp(-(x - min_dist)/spread)
    beyond it, evaluated on a 300-point grid over [0, 3*spread].
    """
    if not 0.0 < min_dist < spread * 10.0:
        raise ValueError("need 0 < min_dist < 10*spread")
    xs = np.linspace(0.0, 3.0 * spread, 300)
    target = np.where(xs < min_dist, 1.0, np.exp(-(xs - min_dist) / spread))

    def shape(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = curve_fit(shape, xs, target, p0=(1.0, 1.0))
    return EmbeddingCurve(a=float(a), b=float(b))


# ---------------------------------------------------------------------------
# Architecture
# ---------------------------------------------------------------------------


def encoder_widths(d: int) -> tuple[int, ...]:
    """Layer widths (d, d//2, d//4, d//8, d//16, 2); requires d >= 32."""
    if d // 16 < 2:
        raise ValueError(f"input dimension {d} too small: d//16 must be >= 2")
    return (d, d // 2, d // 4, d // 8, d // 16, 2)


def group_slices(channels: int, requested: int | None = None) -> tuple[slice, ...]:
    """Channel grouping for group normalization.

    On fully connected activations a group is the whole statistic window,
    so tiny groups are destructive: size 1 normalizes to an identical zero
    (no gradient), size 2 keeps only a sign. The default therefore targets
    groups of at least 8 channels (capped at 32 groups); an explicit
    ``requested`` count is honored up to channels // 2. The remainder
    spreads over the leading groups (sizes differ by at most 1, later
    groups are the smaller ones).
    """
    if channels < 1:
        raise ValueError("channels must be >= 1")
    if requested is None:
        g = max(1, min(32, channels // 8))
    else:
        g = max(1, min(requested, max(1, channels // 2)))
    base = channels // g
    extra = channels % g
    slices = []
    start = 0
    for i in range(g):
        size = base + (1 if i < extra else 0)
        slices.append(slice(start, start + size))
        start += size
    return tuple(slices)


@dataclass
class AutoencoderParams:
    """Weights, normalization parameters and BN running state."""

    widths: tuple[int, ...]
    groups_requested: int | None
    tensors: dict[str, np.ndarray]   # trained
    running: dict[str, np.ndarray]   # BN running mean/var, not trained
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    gn_eps: float = 1e-5

    @property
    def d(self) -> int:
        return self.widths[0]

    @property
    def dec_widths(self) -> tuple[int, ...]:
        return tuple(reversed(self.widths))

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(
            widths=self.widths,
            groups_requested=self.groups_requested,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            running={k: v.copy() for k, v in self.running.items()},
            bn_momentum=self.bn_momentum,
            bn_eps=self.bn_eps,
            gn_eps=self.gn_eps,
        )


@dataclass
class ProjectionModel:
    params: AutoencoderParams
    curve: EmbeddingCurve

    @property
    def d(self) -> int:
        return self.params.d

    def copy(self) -> "ProjectionModel":
        return ProjectionModel(params=self.params.copy(), curve=self.curve)

    def checksum(self) -> str:
        crc = 0
        for key in sorted(self.params.tensors):
            crc = zlib.crc32(self.params.tensors[key].tobytes(), crc)
        for key in sorted(self.params.running):
            crc = zlib.crc32(self.params.running[key].tobytes(), crc)
        return f"{crc:08x}"


def _layer_keys(prefix: str, n_layers: int):
    for l in range(n_layers):
        yield prefix, l


def init_model(
    d: int,
    groups: int | None = None,
    seed: int = 0,
    min_dist: float = 0.1,
    spread: float = 1.0,
) -> ProjectionModel:
    """Fresh model with fan-in-scaled symmetric uniform weights."""
    widths = encoder_widths(d)
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    running: dict[str, np.ndarray] = {}
    for prefix, ws in (("enc", widths), ("dec", tuple(reversed(widths)))):
        n_layers = len(ws) - 1
        for l in range(n_layers):
            fan_in, fan_out = ws[l], ws[l + 1]
            bound = 1.0 / math.sqrt(fan_in)
            tensors[f"{prefix}{l}.w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            tensors[f"{prefix}{l}.b"] = rng.uniform(-bound, bound, size=fan_out)
            if l < n_layers - 1:
                c = fan_out
                tensors[f"{prefix}{l}.gn_g"] = np.ones(c)
                tensors[f"{prefix}{l}.gn_b"] = np.zeros(c)
                tensors[f"{prefix}{l}.bn_g"] = np.ones(c)
                tensors[f"{prefix}{l}.bn_b"] = np.zeros(c)
                running[f"{prefix}{l}.bn_mean"] = np.zeros(c)
                running[f"{prefix}{l}.bn_var"] = np.ones(c)
    params = AutoencoderParams(
        widths=widths, groups_requested=groups, tensors=tensors, running=running
    )
    return ProjectionModel(params=params, curve=fit_curve(min_dist, spread))


# ---------------------------------------------------------------------------
# Normalization primitives
# ---------------------------------------------------------------------------


def _gn_forward(x, slices, gamma, beta, eps):
    xhat = np.empty_like(x)
    inv = []
    for s in slices:
        seg = x[:, s]
        mu = seg.mean(axis=1, keepdims=True)
        var = seg.var(axis=1, keepdims=True)
        inv_s = 1.0 / np.sqrt(var + eps)
        xhat[:, s] = (seg - mu) * inv_s
        inv.append(inv_s)
    return xhat * gamma + beta, (xhat, inv)


def _gn_backward(dy, cache, slices, gamma):
    xhat, inv = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dx = np.empty_like(dy)
    for s, inv_s in zip(slices, inv):
        dxhat = dy[:, s] * gamma[s]
        xh = xhat[:, s]
        dx[:, s] = inv_s * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xh * (dxhat * xh).mean(axis=1, keepdims=True)
        )
    return dx, dgamma, dbeta


def group_norm(
    x: np.ndarray,
    groups: int,
    gamma: np.ndarray | None = None,
    beta: np.ndarray | None = None,
    eps: float = 1e-5,
) -> np.ndarray:
    """Instance-level group normalization of a (batch, channels) array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a (batch, channels) array")
    c = x.shape[1]
    gamma = np.ones(c) if gamma is None else np.asarray(gamma, dtype=np.float64)
    beta = np.zeros(c) if beta is None else np.asarray(beta, dtype=np.float64)
    out, _ = _gn_forward(x, group_slices(c, groups), gamma, beta, eps)
    return out


@dataclass(frozen=True)
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            momentum=momentum,
            eps=eps,
        )


def batch_norm(
    x: np.ndarray, state: BatchNormState, mode: str = "train"
) -> tuple[np.ndarray, BatchNormState]:
    """Batch normalization; train mode returns the updated running state."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a (batch, channels) array")
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("train-mode batch norm needs a batch of at least 2")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        y = state.gamma * (x - mu) / np.sqrt(var + state.eps) + state.beta
        b = x.shape[0]
        unbiased = var * b / (b - 1)
        m = state.momentum
        new_state = replace(
            state,
            running_mean=(1 - m) * state.running_mean + m * mu,
            running_var=(1 - m) * state.running_var + m * unbiased,
        )
        return y, new_state
    if mode == "eval":
        y = (
            state.gamma
            * (x - state.running_mean)
            / np.sqrt(state.running_var + state.eps)
            + state.beta
        )
        return y, state
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Forward / backward stacks
# ---------------------------------------------------------------------------


def _stack_forward(params: AutoencoderParams, prefix: str, x: np.ndarray, mode: str):
    """Run one side of the autoencoder; returns output, caches, new BN stats."""
    widths = params.widths if prefix == "enc" else params.dec_widths
    n_layers = len(widths) - 1
    t = params.tensors
    h = x
    caches = []
    new_stats: dict[str, np.ndarray] = {}
    for l in range(n_layers):
        key = f"{prefix}{l}"
        pre = h @ t[f"{key}.w"] + t[f"{key}.b"]
        if l == n_layers - 1:
            caches.append({"x": h})
            h = pre
            continue
        slices = group_slices(widths[l + 1], params.groups_requested)
        gn_out, gn_cache = _gn_forward(
            pre, slices, t[f"{key}.gn_g"], t[f"{key}.gn_b"], params.gn_eps
        )
        if mode == "train":
            if gn_out.shape[0] < 2:
                raise ValueError("train-mode batch norm needs a batch of at least 2")
            mu = gn_out.mean(axis=0)
            var = gn_out.var(axis=0)
            inv = 1.0 / np.sqrt(var + params.bn_eps)
            bn_hat = (gn_out - mu) * inv
            b = gn_out.shape[0]
            m = params.bn_momentum
            new_stats[f"{key}.bn_mean"] = (
                (1 - m) * params.running[f"{key}.bn_mean"] + m * mu
            )
            new_stats[f"{key}.bn_var"] = (
                (1 - m) * params.running[f"{key}.bn_var"] + m * var * b / (b - 1)
            )
        else:
            inv = 1.0 / np.sqrt(params.running[f"{key}.bn_var"] + params.bn_eps)
            bn_hat = (gn_out - params.running[f"{key}.bn_mean"]) * inv
        bn_out = t[f"{key}.bn_g"] * bn_hat + t[f"{key}.bn_b"]
        act = np.maximum(bn_out, 0.0)
        caches.append(
            {
                "x": h,
                "slices": slices,
                "gn_cache": gn_cache,
                "bn_hat": bn_hat,
                "bn_inv": inv,
                "bn_out": bn_out,
            }
        )
        h = act
    return h, caches, new_stats


def _stack_backward(
    params: AutoencoderParams, prefix: str, caches, d_out: np.ndarray, mode: str
):
    """Gradients of one stack; returns d_input and parameter grads."""
    widths = params.widths if prefix == "enc" else params.dec_widths
    n_layers = len(widths) - 1
    t = params.tensors
    grads: dict[str, np.ndarray] = {}
    grad = d_out
    for l in range(n_layers - 1, -1, -1):
        key = f"{prefix}{l}"
        cache = caches[l]
        if l != n_layers - 1:
            grad = grad * (cache["bn_out"] > 0.0)
            # batch norm backward
            bn_hat = cache["bn_hat"]
            grads[f"{key}.bn_g"] = (grad * bn_hat).sum(axis=0)
            grads[f"{key}.bn_b"] = grad.sum(axis=0)
            dxhat = grad * t[f"{key}.bn_g"]
            if mode == "train":
                b = grad.shape[0]
                grad = (
                    cache["bn_inv"]
                    / b
                    * (
                        b * dxhat
                        - dxhat.sum(axis=0)
                        - bn_hat * (dxhat * bn_hat).sum(axis=0)
                    )
                )
            else:
                grad = dxhat * cache["bn_inv"]
            grad, dgn_g, dgn_b = _gn_backward(
                grad, cache["gn_cache"], cache["slices"], t[f"{key}.gn_g"]
            )
            grads[f"{key}.gn_g"] = dgn_g
            grads[f"{key}.gn_b"] = dgn_b
        x_in = cache["x"]
        grads[f"{key}.w"] = x_in.T @ grad
        grads[f"{key}.b"] = grad.sum(axis=0)
        grad = grad @ t[f"{key}.w"].T
    return grad, grads


def encode(model: ProjectionModel, x: np.ndarray) -> np.ndarray:
    """Eval-mode embedding of one vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    single = x.ndim == 1
    out, _, _ = _stack_forward(model.params, "enc", np.atleast_2d(x), "eval")
    return out[0] if single else out


def decode(model: ProjectionModel, y: np.ndarray) -> np.ndarray:
    """Eval-mode reconstruction of one embedding or a batch."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("non-finite input")
    single = y.ndim == 1
    out, _, _ = _stack_forward(model.params, "dec", np.atleast_2d(y), "eval")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _pair_terms(sq_dist: np.ndarray, p: np.ndarray, curve: EmbeddingCurve):
    """Cross-entropy value and d(loss)/d(sq_dist) for membership targets p.

    The constant entropy terms in p are dropped (they do not affect
    gradients); q is clamped for log stability, and the gradient is zero
    in the clamped regions, matching the piecewise-constant loss there.
    """
    u = np.maximum(sq_dist, 0.0)
    q_raw = 1.0 / (1.0 + curve.a * np.power(u, curve.b))
    q = np.clip(q_raw, _Q_CLAMP, 1.0 - _Q_CLAMP)
    loss = -(p * np.log(q) + (1.0 - p) * np.log1p(-q))
    dq = -p / q + (1.0 - p) / (1.0 - q)
    inside = (q_raw > _Q_CLAMP) & (q_raw < 1.0 - _Q_CLAMP)
    u_safe = np.maximum(u, 1e-12)
    dq_du = -curve.a * curve.b * np.power(u_safe, curve.b - 1.0) * q_raw * q_raw
    return loss, np.where(inside, dq * dq_du, 0.0)


def umap_edge_loss(
    y_i: np.ndarray,
    y_j: np.ndarray,
    p_ij: float,
    curve: EmbeddingCurve,
    negatives: list[np.ndarray] | np.ndarray = (),
):
    """Attraction/repulsion loss of one edge and its analytic gradients.

    Returns (loss, grads) where grads holds d(loss)/d(y_i), d(loss)/d(y_j)
    and one entry per negative sample (repulsion of y_i against each).
    """
    y_i = np.asarray(y_i, dtype=np.float64)
    y_j = np.asarray(y_j, dtype=np.float64)
    negs = [np.asarray(v, dtype=np.float64) for v in negatives]
    if not 0.0 < p_ij <= 1.0:
        raise ValueError("p_ij must be in (0, 1]")

    diff = y_i - y_j
    loss_arr, coef = _pair_terms(np.array([diff @ diff]), np.array([p_ij]), curve)
    loss = float(loss_arr[0])
    g_i = coef[0] * 2.0 * diff
    g_j = -g_i
    g_negs = []
    for neg in negs:
        nd = y_i - neg
        l_n, c_n = _pair_terms(np.array([nd @ nd]), np.array([0.0]), curve)
        loss += float(l_n[0])
        g = c_n[0] * 2.0 * nd
        g_i = g_i + g
        g_negs.append(-g)
    return loss, {"y_i": g_i, "y_j": g_j, "negatives": g_negs}


def recon_loss(x: np.ndarray, x_hat: np.ndarray):
    """Mean squared error over coordinates and its gradient w.r.t. x_hat."""
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError("shape mismatch")
    diff = x_hat - x
    loss = (diff * diff).mean()
    return loss, 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 1e-5
    sched_step: int = 4
    sched_gamma: float = 0.1
    epochs: int = 20
    batch_edges: int = 1024
    negatives: int = 5
    lambda_recon: float = 1.0
    seed: int = 0
    groups: int | None = None
    min_dist: float = 0.1
    spread: float = 1.0
    grad_clip: float | None = 4.0
    # None derives one pass over the edge set per epoch; a fixed value
    # equalizes the optimization budget across differently sized graphs
    steps_per_epoch: int | None = None

    def __post_init__(self):
        if min(self.lr, self.sched_gamma, self.min_dist, self.spread) <= 0:
            raise ValueError("lr, sched_gamma, min_dist and spread must be positive")
        if min(self.sched_step, self.epochs, self.batch_edges) < 1:
            raise ValueError("sched_step, epochs and batch_edges must be >= 1")
        if self.negatives < 0 or self.lambda_recon < 0 or self.weight_decay < 0:
            raise ValueError("negatives, lambda_recon and weight_decay must be >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1 when given")


@dataclass(frozen=True)
class EpochEmbedding:
    """2-D coordinates of every graph node plus provenance tags."""

    coords: np.ndarray        # (m, 2)
    epochs: np.ndarray        # (m,)
    source_index: np.ndarray  # (m,) row in the originating snapshot
    model_id: str


@dataclass(frozen=True)
class TrainingReport:
    seconds: float
    steps: int
    loss_history: tuple[float, ...]


@dataclass(frozen=True)
class TrainResult:
    model: ProjectionModel
    embedding: EpochEmbedding
    report: TrainingReport


def batch_loss_and_grads(
    model: ProjectionModel,
    points: np.ndarray,
    heads: np.ndarray,
    tails: np.ndarray,
    weights: np.ndarray,
    negatives: np.ndarray,
    lambda_recon: float = 1.0,
    grad_clip: float | None = None,
    compute_grads: bool = True,
):
    """Loss and parameter gradients for one edge batch (train-mode norms).

    ``negatives`` is (batch, n_neg) node indices; the fuzzy term is
    normalized per positive edge, reconstruction per coordinate, so the mix
    is scale-balanced. Returns (loss, grads, new_bn_stats); with
    ``compute_grads=False`` only the loss is evaluated (in whatever float
    precision ``points`` and the model tensors carry, which lets the test
    suite difference the loss in extended precision).
    """
    params = model.params
    b = heads.shape[0]
    n_neg = negatives.shape[1] if negatives.size else 0
    flat = np.concatenate([heads, tails, negatives.reshape(-1)])
    uniq, inv = np.unique(flat, return_inverse=True)
    ih = inv[:b]
    it = inv[b : 2 * b]
    ineg = inv[2 * b :].reshape(b, n_neg) if n_neg else np.empty((b, 0), dtype=np.int64)

    x = np.asarray(points)[uniq]
    if x.dtype != np.longdouble:
        x = x.astype(np.float64)
    y, enc_caches, new_stats = _stack_forward(params, "enc", x, "train")

    d_y = np.zeros_like(y)
    # attraction on the positive edges
    diff = y[ih] - y[it]
    att_loss, att_coef = _pair_terms((diff * diff).sum(axis=1), weights, curve=model.curve)
    loss = att_loss.sum() / b
    if compute_grads:
        g = (att_coef / b)[:, None] * 2.0 * diff
        kernels.scatter_add(d_y, ih, g)
        kernels.scatter_add(d_y, it, -g)
    # repulsion against the negatives
    if n_neg:
        nd = y[ih][:, None, :] - y[ineg]
        rep_loss, rep_coef = _pair_terms(
            (nd * nd).sum(axis=2), np.zeros((b, n_neg)), curve=model.curve
        )
        loss += rep_loss.sum() / b
        if compute_grads:
            gneg = (rep_coef / b)[:, :, None] * 2.0 * nd
            kernels.scatter_add(d_y, np.repeat(ih, n_neg), gneg.reshape(-1, 2))
            kernels.scatter_add(d_y, ineg.reshape(-1), -gneg.reshape(-1, 2))
    if compute_grads and grad_clip is not None:
        np.clip(d_y, -grad_clip, grad_clip, out=d_y)

    grads: dict[str, np.ndarray] = {}
    # reconstruction of the positive endpoints through the decoder
    if lambda_recon > 0.0:
        src = np.unique(inv[: 2 * b])
        x_hat, dec_caches, dec_stats = _stack_forward(params, "dec", y[src], "train")
        new_stats.update(dec_stats)
        r_loss, d_xhat = recon_loss(x[src], x_hat)
        loss += lambda_recon * r_loss
        if compute_grads:
            d_y_rec, dec_grads = _stack_backward(
                params, "dec", dec_caches, lambda_recon * d_xhat, "train"
            )
            grads.update(dec_grads)
            d_y_total = d_y.copy()
            d_y_total[src] += d_y_rec
    if not compute_grads:
        return loss, None, new_stats
    if lambda_recon <= 0.0:
        d_y_total = d_y

    _, enc_grads = _stack_backward(params, "enc", enc_caches, d_y_total, "train")
    grads.update(enc_grads)
    for key in params.tensors:
        if key not in grads:
            grads[key] = np.zeros_like(params.tensors[key])
    return loss, grads, new_stats


def train(
    graph: SpatioTemporalGraph,
    cfg: TrainConfig,
    model: ProjectionModel | None = None,
) -> TrainResult:
    """Edge-batch SGD over the composite graph; returns the node embedding.

    Passing ``model`` warm-starts from a previous epoch's parameters (BN
    running statistics carry over); otherwise a fresh model is drawn from
    ``cfg.seed``. Positive edges are sampled proportionally to weight,
    pooled across spatial and temporal sets.
    """
    t_start = time.perf_counter()
    d = graph.points.shape[1]
    if model is None:
        model = init_model(
            d, groups=cfg.groups, seed=cfg.seed, min_dist=cfg.min_dist, spread=cfg.spread
        )
    else:
        if model.d != d:
            raise ValueError(f"warm-start model expects d={model.d}, graph has d={d}")
        model = model.copy()

    ei = np.concatenate([graph.spatial_i, graph.temporal_i])
    ej = np.concatenate([graph.spatial_j, graph.temporal_j])
    ew = np.concatenate([graph.spatial_w, graph.temporal_w])
    loss_history: list[float] = []
    steps = 0

    if ei.size > 0:
        total = ew.sum()
        cum = np.cumsum(ew / total)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7261]))
        steps_per_epoch = cfg.steps_per_epoch or max(1, math.ceil(ei.size / cfg.batch_edges))
        adam_m = {k: np.zeros_like(v) for k, v in model.params.tensors.items()}
        adam_v = {k: np.zeros_like(v) for k, v in model.params.tensors.items()}
        adam_t = 0
        for epoch in range(cfg.epochs):
            lr = cfg.lr * cfg.sched_gamma ** (epoch // cfg.sched_step)
            for _ in range(steps_per_epoch):
                draws = rng.random(cfg.batch_edges)
                eidx = np.minimum(
                    np.searchsorted(cum, draws, side="right"), ei.size - 1
                )
                negs = rng.integers(
                    0, graph.n_nodes, size=(cfg.batch_edges, cfg.negatives)
                )
                loss, grads, new_stats = batch_loss_and_grads(
                    model,
                    graph.points,
                    ei[eidx],
                    ej[eidx],
                    ew[eidx],
                    negs,
                    lambda_recon=cfg.lambda_recon,
                    grad_clip=cfg.grad_clip,
                )
                if not math.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss at step {steps} (lr={lr:g})"
                    )
                model.params.running.update(new_stats)
                adam_t += 1
                bc1 = 1.0 - _ADAM_BETA1**adam_t
                bc2 = 1.0 - _ADAM_BETA2**adam_t
                for key, g in grads.items():
                    m = adam_m[key]
                    v = adam_v[key]
                    m *= _ADAM_BETA1
                    m += (1.0 - _ADAM_BETA1) * g
                    v *= _ADAM_BETA2
                    v += (1.0 - _ADAM_BETA2) * g * g
                    p = model.params.tensors[key]
                    p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + _ADAM_EPS))
                    p -= lr * cfg.weight_decay * p
                loss_history.append(loss)
                steps += 1

    coords = encode(model, graph.points)
    embedding = EpochEmbedding(
        coords=coords,
        epochs=graph.epochs.copy(),
        source_index=graph.source_index.copy(),
        model_id=model.checksum(),
    )
    report = TrainingReport(
        seconds=time.perf_counter() - t_start,
        steps=steps,
        loss_history=tuple(loss_history),
    )
    return TrainResult(model=model, embedding=embedding, report=report)


# ---------------------------------------------------------------------------
# Parameter vector helpers (used by the finite-difference audits)
# ---------------------------------------------------------------------------


def params_to_vector(model: ProjectionModel) -> np.ndarray:
    return np.concatenate(
        [model.params.tensors[k].reshape(-1) for k in sorted(model.params.tensors)]
    )


def vector_to_params(model: ProjectionModel, vec: np.ndarray) -> None:
    offset = 0
    for key in sorted(model.params.tensors):
        tensor = model.params.tensors[key]
        size = tensor.size
        tensor[...] = vec[offset : offset + size].reshape(tensor.shape)
        offset += size
    if offset != vec.size:
        raise ValueError("vector length does not match model parameters")


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


def write_model(model: ProjectionModel, path: str | Path) -> None:
    """Versioned binary checkpoint (magic SCMM), atomic like snapshots."""
    import os

    params = model.params
    head = bytearray()
    head += MODEL_MAGIC
    head += struct.pack("<H", MODEL_VERSION)
    head += struct.pack("<I", params.d)
    head += struct.pack("<B", len(params.widths))
    head += struct.pack(f"<{len(params.widths)}I", *params.widths)
    head += struct.pack("<i", -1 if params.groups_requested is None else params.groups_requested)
    head += struct.pack("<dd", model.curve.a, model.curve.b)
    head += struct.pack("<ddd", params.bn_momentum, params.bn_eps, params.gn_eps)
    body = bytearray()
    for key in sorted(params.tensors):
        body += params.tensors[key].astype("<f8", copy=False).tobytes(order="C")
    for key in sorted(params.running):
        body += params.running[key].astype("<f8", copy=False).tobytes(order="C")

    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    try:
        tmp.write_bytes(bytes(head) + bytes(body))
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def read_model(path: str | Path) -> ProjectionModel:
    """Inverse of :func:`write_model` with the usual format validation."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad model magic")
    off = 4
    (version,) = struct.unpack_from("<H", raw, off)
    off += 2
    if version != MODEL_VERSION:
        raise VersionError(f"{path}: unsupported model version {version}")
    (d,) = struct.unpack_from("<I", raw, off)
    off += 4
    (n_widths,) = struct.unpack_from("<B", raw, off)
    off += 1
    widths = struct.unpack_from(f"<{n_widths}I", raw, off)
    off += 4 * n_widths
    (groups_raw,) = struct.unpack_from("<i", raw, off)
    off += 4
    a, b = struct.unpack_from("<dd", raw, off)
    off += 16
    bn_momentum, bn_eps, gn_eps = struct.unpack_from("<ddd", raw, off)
    off += 24
    if widths != encoder_widths(d):
        raise FormatError(f"{path}: widths {widths} inconsistent with d={d}")

    reference = init_model(d, groups=None if groups_raw < 0 else groups_raw, seed=0)
    params = reference.params
    params.bn_momentum = bn_momentum
    params.bn_eps = bn_eps
    params.gn_eps = gn_eps
    expected = off
    expected += 8 * sum(t.size for t in params.tensors.values())
    expected += 8 * sum(t.size for t in params.running.values())
    if len(raw) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(raw)} bytes, header implies {expected}"
        )
    for key in sorted(params.tensors):
        tensor = params.tensors[key]
        params.tensors[key] = (
            np.frombuffer(raw, dtype="<f8", count=tensor.size, offset=off)
            .reshape(tensor.shape)
            .copy()
        )
        off += 8 * tensor.size
    for key in sorted(params.running):
        tensor = params.running[key]
        params.running[key] = (
            np.frombuffer(raw, dtype="<f8", count=tensor.size, offset=off)
            .reshape(tensor.shape)
            .copy()
        )
        off += 8 * tensor.size
    return ProjectionModel(params=params, curve=EmbeddingCurve(a=a, b=b))
