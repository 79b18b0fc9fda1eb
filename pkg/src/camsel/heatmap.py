"""Spatial-appearance heatmap features from detection boxes.

Each detection box contributes five points (four corners and the center).
Every point spreads its box's appearance vector onto the four grid cells
whose centers surround it, with bilinear weights that sum to one, so total
heat mass is conserved. Pooling the grid gives a fixed-length foreground
feature per camera view.

An exact-summation mode accumulates the grid in ``fractions.Fraction``
arithmetic, making conservation and linearity identities exact rather than
float-approximate; it exists for verification, not speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "GridGeometry",
    "DetectionBox",
    "Heatmap",
    "box_points",
    "point_weights",
    "build_heatmap",
    "pool_heatmap",
    "featurize_boxes",
    "contrastive_loss",
]


@dataclass(frozen=True)
class GridGeometry:
    """Quantization of the image plane into gx x gy cells."""

    image_w: float
    image_h: float
    gx: int = 16
    gy: int = 9

    def __post_init__(self) -> None:
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("image size must be positive")
        if self.gx < 1 or self.gy < 1:
            raise ValueError("grid resolution must be >= 1")

    @property
    def n_cells(self) -> int:
        return self.gx * self.gy

    def cell_index(self, ix: int, iy: int) -> int:
        return iy * self.gx + ix


@dataclass(frozen=True)
class DetectionBox:
    x1: float
    y1: float
    x2: float
    y2: float
    appearance: np.ndarray

    def __post_init__(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2})"
            )
        object.__setattr__(
            self, "appearance", np.asarray(self.appearance, dtype=np.float64)
        )


@dataclass(frozen=True)
class Heatmap:
    """Accumulated appearance heat per cell. ``grid`` is (gy, gx, A)."""

    grid: np.ndarray
    geom: GridGeometry


def box_points(b: DetectionBox) -> list[tuple[float, float]]:
    """Four corners plus the center point."""
    cx = (b.x1 + b.x2) / 2
    cy = (b.y1 + b.y2) / 2
    return [(b.x1, b.y1), (b.x2, b.y1), (b.x1, b.y2), (b.x2, b.y2), (cx, cy)]


def _axis_weights(p: float, pitch: Fraction, cells: int, exact: bool):
    """Position between surrounding cell centers along one axis.

    Returns (lower cell index, weight on the upper cell). The coordinate is
    clamped to the span of cell centers, so border points still receive a
    convex weight combination.
    """
    u = Fraction(p) / pitch - Fraction(1, 2)
    if u < 0:
        u = Fraction(0)
    if u > cells - 1:
        u = Fraction(cells - 1)
    i0 = int(u)
    if i0 > cells - 2:
        i0 = cells - 2
    w1 = u - i0
    if not exact:
        return i0, float(w1)
    return i0, w1


def point_weights(
    p: tuple[float, float], geom: GridGeometry, exact: bool = False
) -> list[tuple[int, float | Fraction]]:
    """Bilinear weights of point ``p`` over the 4 surrounding cell centers.

    Weights are nonnegative, sum to 1, and zero-weight cells are dropped
    (a point exactly on a cell center yields a single pair). Points must lie
    inside the image rectangle; points between the image edge and the
    outermost cell centers are clamped to the center hull.
    """
    x, y = p
    if not (0 <= x <= geom.image_w and 0 <= y <= geom.image_h):
        raise ValueError(f"point {p} outside image {geom.image_w}x{geom.image_h}")
    if geom.gx == 1 and geom.gy == 1:
        one = Fraction(1) if exact else 1.0
        return [(0, one)]
    px = Fraction(geom.image_w) / geom.gx
    py = Fraction(geom.image_h) / geom.gy
    one = Fraction(1) if exact else 1.0
    if geom.gx == 1:
        ix0, wx1 = 0, one * 0
    else:
        ix0, wx1 = _axis_weights(x, px, geom.gx, exact)
    if geom.gy == 1:
        iy0, wy1 = 0, one * 0
    else:
        iy0, wy1 = _axis_weights(y, py, geom.gy, exact)
    wx0 = one - wx1
    wy0 = one - wy1
    out = []
    for iy, wy in ((iy0, wy0), (iy0 + 1, wy1)):
        if geom.gy == 1 and iy > 0:
            continue
        for ix, wx in ((ix0, wx0), (ix0 + 1, wx1)):
            if geom.gx == 1 and ix > 0:
                continue
            w = wx * wy
            if w != 0:
                out.append((geom.cell_index(ix, iy), w))
    return out


def build_heatmap(
    boxes: Sequence[DetectionBox],
    geom: GridGeometry,
    normalize_points: bool = False,
    exact: bool = False,
) -> Heatmap:
    """Accumulate appearance heat from all boxes' five-point stencils.

    Each of a box's 5 points deposits weight * appearance into its cells, so
    one box adds total mass 5 * appearance (or 1 * appearance when
    ``normalize_points`` divides the stencil by 5). Summation order is fixed
    (box order, then point order) for bit-reproducibility.
    """
    A = boxes[0].appearance.size if boxes else 0
    if exact:
        grid = np.empty((geom.gy, geom.gx, A), dtype=object)
        grid[...] = Fraction(0)
    else:
        grid = np.zeros((geom.gy, geom.gx, A))
    scale = Fraction(1, 5) if exact else 0.2
    for b in boxes:
        if b.appearance.size != A:
            raise ValueError("appearance dimension varies across boxes")
        if exact:
            app = np.array([Fraction(v) for v in b.appearance], dtype=object)
        else:
            app = b.appearance
        for pt in box_points(b):
            for cell, w in point_weights(pt, geom, exact=exact):
                if normalize_points:
                    w = w * scale
                iy, ix = divmod(cell, geom.gx)
                grid[iy, ix] = grid[iy, ix] + w * app
    return Heatmap(grid=grid, geom=geom)


def pool_heatmap(h: Heatmap, mode: str) -> np.ndarray:
    """Collapse the grid to a vector: per-component mean, max, or flatten."""
    if mode == "average":
        return h.grid.sum(axis=(0, 1)) / h.geom.n_cells
    if mode == "max":
        return h.grid.max(axis=(0, 1))
    if mode == "flatten":
        return h.grid.reshape(-1)
    raise ValueError(f"unknown pooling mode {mode!r}")


def featurize_boxes(
    boxes: Sequence[DetectionBox],
    geom: GridGeometry,
    A: int,
    pool: str = "avg+max",
    normalize_points: bool = False,
) -> np.ndarray:
    """Foreground feature for one frame+camera: pooled heatmap.

    The default concatenates average and max pooling (length 2A); single
    modes give length A, flatten gives gx*gy*A. An empty box list yields the
    all-zero feature.
    """
    if boxes:
        if boxes[0].appearance.size != A:
            raise ValueError(
                f"boxes carry {boxes[0].appearance.size}-dim appearance, "
                f"feature layout expects {A}"
            )
        h = build_heatmap(boxes, geom, normalize_points=normalize_points)
    else:
        h = Heatmap(grid=np.zeros((geom.gy, geom.gx, A)), geom=geom)
    if pool == "avg+max":
        return np.concatenate(
            [pool_heatmap(h, "average"), pool_heatmap(h, "max")]
        )
    return np.asarray(pool_heatmap(h, pool), dtype=np.float64)


def contrastive_loss(
    x_i: np.ndarray, x_j: np.ndarray, y_ij: int, delta: float = 1.0
) -> float:
    """Margin loss on embedding distance: y*D^2 + (1-y)*max(delta-D, 0)^2.

    Similar pairs (y=1) are pulled together; dissimilar pairs (y=0) are
    pushed apart until their distance exceeds the margin.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ValueError(f"length mismatch: {x_i.shape} vs {x_j.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if y_ij not in (0, 1):
        raise ValueError("y_ij must be 0 or 1")
    d = float(np.linalg.norm(x_i - x_j))
    if y_ij == 1:
        return d * d
    hinge = max(delta - d, 0.0)
    return hinge * hinge
