"""Space-filling knot placement via K-means on systematic-grid coordinates.

Coarse-scale knots spread over the whole study region.  Fine-scale knots are
restricted to the convex hull of the plot centroids with nonzero counts --
without that restriction, short-range basis functions centered in large
all-zero areas routinely wreck convergence of the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHull, TooFewPoints
from .geometry import StudyRegion, convex_hull, systematic_grid, _as_points

_MAX_LLOYD_ITER = 100


@dataclass(frozen=True)
class KnotSet:
    """Coarse and fine knot coordinates with their minimum pairwise distances."""

    coarse: np.ndarray
    fine: np.ndarray
    min_dist_coarse: float
    min_dist_fine: float

    def __post_init__(self):
        for name in ("coarse", "fine"):
            arr = _as_points(getattr(self, name))
            if len(arr) < 1:
                raise TooFewPoints(f"{name} knot set is empty")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, coarse, fine, single_knot_dist: float | None = None) -> "KnotSet":
        """Build a knot set, computing min distances from the coordinates.

        ``single_knot_dist`` (typically the region diameter) substitutes for
        the undefined minimum pairwise distance of a one-knot set.
        """
        return cls(
            coarse=coarse,
            fine=fine,
            min_dist_coarse=_min_pairwise_dist(coarse, single_knot_dist),
            min_dist_fine=_min_pairwise_dist(fine, single_knot_dist),
        )

    def to_dict(self, seed: int | None = None) -> dict:
        out = {"coarse": self.coarse.tolist(), "fine": self.fine.tolist()}
        if seed is not None:
            out["seed"] = int(seed)
        return out

    @classmethod
    def from_dict(cls, data: dict, single_knot_dist: float | None = None) -> "KnotSet":
        return cls.from_arrays(data["coarse"], data["fine"], single_knot_dist)


def _min_pairwise_dist(points, fallback: float | None = None) -> float:
    pts = _as_points(points)
    if len(pts) < 2:
        if fallback is None:
            raise TooFewPoints("min pairwise distance undefined for a single knot")
        return float(fallback)
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    d2[np.diag_indices(len(pts))] = np.inf
    return float(np.sqrt(d2.min()))


def farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic farthest-point initialization.

    The first center is drawn uniformly with the seeded generator; each later
    center is the point farthest from its nearest existing center (ties break
    to the lowest index).
    """
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(points)))
    chosen = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def within_cluster_ss(points: np.ndarray, centers: np.ndarray) -> float:
    """K-means objective: sum of squared distances to the nearest center."""
    d2 = _dist2_to_centers(_as_points(points), _as_points(centers))
    return float(d2.min(axis=1).sum())


def _dist2_to_centers(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.sum(diff * diff, axis=-1)


def kmeans(points, k: int, seed: int, max_iter: int = _MAX_LLOYD_ITER) -> np.ndarray:
    """Lloyd K-means with deterministic farthest-point initialization.

    Runs to an assignment fixed point or ``max_iter`` iterations.  An empty
    cluster is reseeded at the point currently farthest from its assigned
    center.  Deterministic given ``seed``.
    """
    pts = _as_points(points)
    if k < 1:
        raise TooFewPoints("k must be >= 1")
    if k > len(pts):
        raise TooFewPoints(f"k={k} exceeds {len(pts)} candidate points")
    centers = farthest_point_init(pts, k, seed)
    assign = np.full(len(pts), -1)
    for _ in range(max_iter):
        d2 = _dist2_to_centers(pts, centers)
        new_assign = np.argmin(d2, axis=1)
        nearest_d2 = d2[np.arange(len(pts)), new_assign]
        for j in range(k):
            sel = new_assign == j
            if np.any(sel):
                centers[j] = pts[sel].mean(axis=0)
            else:
                stray = int(np.argmax(nearest_d2))
                centers[j] = pts[stray]
                new_assign[stray] = j
                nearest_d2[stray] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centers


def _grid_size(k: int) -> int:
    return max(2000, 50 * k)


def _fine_candidates(region, nonzero_centroids, k_fine, fallback_pad, allow_fallback):
    """Systematic-grid points inside the fine-knot region (hull or fallback box)."""
    centroids = _as_points(nonzero_centroids)
    try:
        fine_poly = convex_hull(centroids)
    except DegenerateHull:
        if not allow_fallback:
            raise
        # degenerate hull: inflate the centroid bounding box by the plot side
        lo = centroids.min(axis=0) - fallback_pad
        hi = centroids.max(axis=0) + fallback_pad
        if not (hi > lo).all():
            raise DegenerateHull("degenerate fine-knot region even after padding")
        fine_poly = convex_hull(
            [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
        )
    fine_region = StudyRegion(boundary=fine_poly)

    target = _grid_size(k_fine)
    for _ in range(6):
        candidates = systematic_grid(fine_region, target)
        candidates = candidates[region.contains_points(candidates)]
        if len(candidates) >= max(k_fine, target // 4):
            return candidates
        target *= 2
    if len(candidates) < k_fine:
        raise TooFewPoints("fine-knot region too small to grid")
    return candidates


def place_knots(
    region: StudyRegion,
    nonzero_centroids,
    k_coarse: int,
    k_fine: int,
    seed: int,
    fallback_pad: float = 0.0,
    allow_fallback: bool = True,
) -> KnotSet:
    """Place coarse knots over the region and fine knots over the nonzero hull.

    Both sets come from K-means over a systematic grid of ``max(2000, 50k)``
    points; the fine grid is clipped to ``hull(nonzero_centroids)`` intersected
    with the region.  When the hull is degenerate (collinear centroids) and
    ``allow_fallback`` is set, the fine region is the centroid bounding box
    inflated by ``fallback_pad`` on every side.
    """
    coarse_pts = systematic_grid(region, _grid_size(k_coarse))
    coarse = kmeans(coarse_pts, k_coarse, seed)
    fine_pts = _fine_candidates(region, nonzero_centroids, k_fine, fallback_pad, allow_fallback)
    fine = kmeans(fine_pts, k_fine, seed)
    return KnotSet.from_arrays(coarse, fine, single_knot_dist=region.diameter)


def suggest_knot_counts(n_plots: int) -> tuple[int, int]:
    """Rule-of-thumb knot counts: total = n/4 clamped to [20, 150], fine = 4x coarse."""
    total = int(min(150, max(20, round(n_plots / 4))))
    k_coarse = max(1, round(total / 5))
    return k_coarse, total - k_coarse
