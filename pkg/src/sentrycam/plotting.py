"""Deterministic SVG scatter rendering for embeddings.

Pure-text SVG output keyed entirely by the data: fixed palette indexed by
class, viewport from the data bounds with a 5% margin. The optional
decision map decodes a 2-D grid through the model and shades each cell by
the pluggable predictor's class, leaving white where neighboring cells
disagree.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
    "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)


def class_color(label: int) -> str:
    return PALETTE[int(label) % len(PALETTE)]


def _viewport(coords: np.ndarray) -> tuple[float, float, float, float]:
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    margin = 0.05 * span
    lo = lo - margin
    hi = hi + margin
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def render_scatter(
    coords: np.ndarray,
    labels: np.ndarray | None = None,
    size: int = 640,
    radius: float = 2.5,
    decision_grid: tuple[np.ndarray, np.ndarray] | None = None,
    title: str | None = None,
) -> str:
    """SVG text for a 2-D scatter; points are circles colored by label.

    ``decision_grid`` is an optional (grid_labels (g, g), extent unused)
    background produced by :func:`decision_map_grid`.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coords must be (n, 2)")
    x0, y0, x1, y1 = _viewport(coords)
    sx = size / (x1 - x0)
    sy = size / (y1 - y0)

    def px(x: float) -> float:
        return (x - x0) * sx

    def py(y: float) -> float:
        # svg y grows downward
        return size - (y - y0) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if decision_grid is not None:
        grid_labels = decision_grid[0]
        g = grid_labels.shape[0]
        cell = size / g
        for gy in range(g):
            for gx in range(g):
                lab = grid_labels[gy, gx]
                if lab < 0:
                    continue  # boundary cell stays white
                parts.append(
                    f'<rect x="{gx * cell:.2f}" y="{(g - 1 - gy) * cell:.2f}" '
                    f'width="{cell:.2f}" height="{cell:.2f}" '
                    f'fill="{class_color(lab)}" fill-opacity="0.25"/>'
                )
    if title:
        parts.append(
            f'<text x="8" y="18" font-family="monospace" font-size="14">{title}</text>'
        )
    for i in range(coords.shape[0]):
        color = class_color(labels[i]) if labels is not None else PALETTE[0]
        parts.append(
            f'<circle cx="{px(coords[i, 0]):.2f}" cy="{py(coords[i, 1]):.2f}" '
            f'r="{radius}" fill="{color}" fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def decision_map_grid(
    coords: np.ndarray,
    decoder: Callable[[np.ndarray], np.ndarray],
    predictor: Callable[[np.ndarray], np.ndarray],
    grid: int = 64,
) -> tuple[np.ndarray, tuple[float, float, float, float]]:
    """Classify a grid over the embedding viewport via decode + predict.

    Cells whose 4-neighborhood disagrees are marked -1 (the decision
    boundary, rendered white).
    """
    coords = np.asarray(coords, dtype=np.float64)
    x0, y0, x1, y1 = _viewport(coords)
    xs = np.linspace(x0, x1, grid)
    ys = np.linspace(y0, y1, grid)
    gx, gy = np.meshgrid(xs, ys)
    flat = np.column_stack([gx.ravel(), gy.ravel()])
    labels = np.asarray(predictor(decoder(flat))).reshape(grid, grid).astype(np.int64)
    out = labels.copy()
    for dy_, dx_ in ((0, 1), (1, 0)):
        a = labels[: grid - dy_, : grid - dx_]
        b = labels[dy_:, dx_:]
        diff = a != b
        out[: grid - dy_, : grid - dx_][diff] = -1
        out[dy_:, dx_:][diff] = -1
    return out, (x0, y0, x1, y1)


def write_svg(svg: str, path: str | Path) -> None:
    Path(path).write_text(svg)
