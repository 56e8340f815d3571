"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .geometry import PlotCount, RectPlot


def check_centroids(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"expected (n, 2) centroids, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("centroids must be finite")
    return X


def check_counts(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} counts, got shape {y.shape}")
    if np.any(y < 0) or not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("counts must be non-negative integers")
    return y.astype(int)


def check_sides(sides, n: int) -> np.ndarray:
    """Normalize plot sides to an (n, 2) array of positive lengths."""
    arr = np.asarray(sides, dtype=float)
    if arr.ndim == 0:
        arr = np.full((n, 2), float(arr))
    elif arr.shape == (2,):
        arr = np.tile(arr, (n, 1))
    if arr.shape != (n, 2):
        raise ValueError(f"expected scalar, (2,), or ({n}, 2) sides, got {arr.shape}")
    if not np.all(arr > 0):
        raise ValueError("plot sides must be positive")
    return arr


def as_rect_plots(X, sides) -> list[RectPlot]:
    X = check_centroids(X)
    sides = check_sides(sides, len(X))
    return [
        RectPlot(centroid=c, side_x=s[0], side_y=s[1]) for c, s in zip(X, sides)
    ]


def as_plot_counts(X, y, sides) -> list[PlotCount]:
    X = check_centroids(X)
    y = check_counts(y, len(X))
    sides = check_sides(sides, len(X))
    areas = sides[:, 0] * sides[:, 1]
    return [
        PlotCount(centroid=c, area=a, count=int(cnt))
        for c, a, cnt in zip(X, areas, y)
    ]
