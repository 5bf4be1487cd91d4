"""Independent reference implementations used as test oracles.

Everything here recomputes results from definitions (plain loops, scipy
distance matrices), deliberately avoiding the package's own kernels so the
two sides of every comparison stay independent.
"""

import math

import numpy as np
from scipy.spatial.distance import cdist


# -- k-NN / density ------------------------------------------------------------


def ref_knn(points, k):
    """Plain-python exact k-NN with (distance, index) ordering."""
    n = len(points)
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for i in range(n):
        cand = []
        for j in range(n):
            if j == i:
                continue
            cand.append((math.dist(points[i], points[j]), j))
        cand.sort()
        idx[i] = [c[1] for c in cand[:k]]
        dist[i] = [c[0] for c in cand[:k]]
    return idx, dist


def oracle_avg_kth(points, k):
    """k-th-neighbor mean distance via scipy cdist + partition."""
    d = cdist(points, points)
    np.fill_diagonal(d, np.inf)
    return float(np.partition(d, k - 1, axis=1)[:, k - 1].mean())


def oracle_sweep_boundary(points, k, eta, grid_step=0.01, seeds=20, seed0=999331):
    """Minimal grid ratio whose seed-averaged relative density clears eta.

    Mirrors the feasibility rule of the binary search (probe sizes clamp
    to k+1) but walks an explicit ratio grid from below.
    """
    n = len(points)
    dbar_full = oracle_avg_kth(points, k)
    ratios = np.arange(grid_step, 1.0 + grid_step / 2, grid_step)
    for r in ratios:
        vals = []
        for s in range(seeds):
            rng = np.random.default_rng((seed0, s))
            size = min(n, max(int(np.floor(r * n)), k + 1))
            idx = rng.choice(n, size=size, replace=False)
            sub = oracle_avg_kth(points[idx], k)
            vals.append(1.0 if sub == 0 else dbar_full / sub)
        if float(np.mean(vals)) >= eta:
            return float(r)
    return 1.0


# -- fuzzy graph ----------------------------------------------------------------


def ref_sigma(dists, rho, target, n_iter=64, tol=1e-5):
    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(n_iter):
        psum = sum(math.exp(-max(0.0, d - rho) / mid) for d in dists)
        if abs(psum - target) < tol:
            break
        if psum > target:
            hi = mid
            mid = (lo + hi) / 2
        else:
            lo = mid
            mid = mid * 2 if hi == math.inf else (lo + hi) / 2
    mean = sum(dists) / len(dists)
    if mean == 0.0:
        return 1.0
    return min(max(mid, 1e-3 * mean), 1e3 * mean)


def ref_fuzzy_graph(points, k):
    """Full reference pipeline: pairwise distances, calibration, t-conorm."""
    idx, dist = ref_knn(points, k)
    n = len(points)
    target = math.log2(k)
    directed = {}
    for i in range(n):
        rho = dist[i][0]
        sigma = ref_sigma(dist[i], rho, target)
        for j_pos in range(k):
            j = int(idx[i][j_pos])
            directed[(i, j)] = math.exp(-max(0.0, dist[i][j_pos] - rho) / sigma)
    sym = {}
    for (i, j), w in directed.items():
        key = (min(i, j), max(i, j))
        back = directed.get((j, i), 0.0)
        if key not in sym:
            sym[key] = w + back - w * back
    return sym


# -- metrics ----------------------------------------------------------------------


def oracle_preservation(high, low, k):
    """Direct-definition neighbor overlap via full pairwise sorting."""
    n = len(high)
    total = 0
    for i in range(n):
        def neighbors(pts):
            order = sorted(
                (math.dist(pts[i], pts[j]), j) for j in range(n) if j != i
            )
            return {j for _, j in order[:k]}

        total += len(neighbors(high) & neighbors(low))
    return total / (n * k)


def oracle_spearman(a, b):
    """Average ranks, then the Pearson formula, straight from the definition."""

    def avg_ranks(v):
        out = [0.0] * len(v)
        for i, x in enumerate(v):
            less = sum(1 for y in v if y < x)
            equal = sum(1 for y in v if y == x)
            out[i] = less + (equal + 1) / 2.0
        return out

    ra, rb = avg_ranks(list(a)), avg_ranks(list(b))
    ma = sum(ra) / len(ra)
    mb = sum(rb) / len(rb)
    num = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    da = math.sqrt(sum((x - ma) ** 2 for x in ra))
    db = math.sqrt(sum((y - mb) ** 2 for y in rb))
    if da == 0 or db == 0:
        return None
    return num / (da * db)


# -- audit ------------------------------------------------------------------------


def oracle_alert_epoch(series, unhealthy, k=2, alpha=0.25, window=10, factor=0.5):
    smoothed = [series[0]]
    for x in series[1:]:
        smoothed.append(factor * x + (1 - factor) * smoothed[-1])
    for t in range(k, len(smoothed)):
        deltas = [smoothed[i] - smoothed[i - 1] for i in range(t - k + 1, t + 1)]
        if unhealthy == "decrease" and not all(d < 0 for d in deltas):
            continue
        if unhealthy == "increase" and not all(d > 0 for d in deltas):
            continue
        lo = max(0, t - window)
        win = smoothed[lo:t]
        mean = sum(win) / len(win)
        sigma = math.sqrt(sum((v - mean) ** 2 for v in win) / len(win))
        if abs(smoothed[t] - smoothed[t - 1]) > alpha * sigma:
            return t
    return None


def oracle_cluster_metrics(points, labels):
    classes = sorted(set(labels.tolist()))
    cents = [points[labels == c].mean(axis=0) for c in classes]
    inter, cnt = 0.0, 0
    for i in range(len(cents)):
        for j in range(i + 1, len(cents)):
            inter += float(np.linalg.norm(cents[i] - cents[j]))
            cnt += 1
    intra = float(np.mean([
        ((points[labels == c] - cents[ci]) ** 2).sum(axis=1).mean()
        for ci, c in enumerate(classes)
    ]))
    return inter / cnt, intra
