"""Planar geometry: polygons with holes, containment, hulls, and grids.

Coordinates are plain floats in region units.  Point sets are ``(n, 2)``
ndarrays throughout; a single point may be given as any length-2 sequence.
All types are immutable after construction and all operations are pure, so
values can be shared freely across threads and worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyUnsampledRegion,
    InvalidGeometry,
    DegenerateHull,
    PlotOutsideRegion,
)

_CHUNK = 4096  # max points per broadcast block in containment tests


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidGeometry(f"expected (n, 2) coordinates, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidGeometry("coordinates must be finite")
    return pts


def _as_ring(ring) -> np.ndarray:
    """Validate a ring and drop a duplicated closing vertex if present."""
    arr = _as_points(ring)
    if len(arr) >= 4 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(arr) < 3:
        raise InvalidGeometry("a ring needs at least 3 distinct vertices")
    if _ring_area(arr) == 0.0:
        raise InvalidGeometry("ring is degenerate (collinear vertices)")
    arr.setflags(write=False)
    return arr


def _ring_area(ring: np.ndarray) -> float:
    """Unsigned shoelace area of one ring."""
    x, y = ring[:, 0], ring[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * abs(float(np.sum(x * y1 - x1 * y)))


def _points_on_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """True where a point lies exactly on a ring edge (zero cross product)."""
    a = ring
    b = np.roll(ring, -1, axis=0)
    px = points[:, 0, None]
    py = points[:, 1, None]
    cross = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (px - a[:, 0])
    within_x = (px >= np.minimum(a[:, 0], b[:, 0])) & (px <= np.maximum(a[:, 0], b[:, 0]))
    within_y = (py >= np.minimum(a[:, 1], b[:, 1])) & (py <= np.maximum(a[:, 1], b[:, 1]))
    return np.any((cross == 0.0) & within_x & within_y, axis=1)


def _crossings_odd(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd ray-casting parity of each point w.r.t. one ring."""
    a = ring
    b = np.roll(ring, -1, axis=0)
    px = points[:, 0, None]
    py = points[:, 1, None]
    straddles = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at_y = a[:, 0] + (py - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    crossing = straddles & (px < x_at_y)
    return np.bitwise_and(np.sum(crossing, axis=1), 1).astype(bool)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with optional holes ("donut" regions).

    Rings may be given in either orientation and with or without a repeated
    closing vertex.  Rings must be simple and holes must lie inside the outer
    ring; only cheap versions of these preconditions are verified.
    """

    outer: np.ndarray
    holes: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outer", _as_ring(self.outer))
        holes = tuple(_as_ring(h) for h in self.holes)
        object.__setattr__(self, "holes", holes)
        for hole in holes:
            if not np.all(self._inside_rings(hole, [self.outer])):
                raise InvalidGeometry("hole vertices must lie inside the outer ring")

    @staticmethod
    def _inside_rings(points, rings):
        inside = _crossings_odd(points, rings[0])
        for ring in rings:
            inside |= _points_on_ring(points, ring)
        return inside

    def rings(self):
        return (self.outer, *self.holes)

    def contains_points(self, points) -> np.ndarray:
        """Boundary-inclusive even-odd containment test for many points."""
        pts = _as_points(points)
        out = np.empty(len(pts), dtype=bool)
        for lo in range(0, len(pts), _CHUNK):
            block = pts[lo:lo + _CHUNK]
            parity = np.zeros(len(block), dtype=bool)
            boundary = np.zeros(len(block), dtype=bool)
            for ring in self.rings():
                parity ^= _crossings_odd(block, ring)
                boundary |= _points_on_ring(block, ring)
            out[lo:lo + _CHUNK] = parity | boundary
        return out

    def to_dict(self) -> dict:
        return {
            "outer": self.outer.tolist(),
            "holes": [h.tolist() for h in self.holes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polygon":
        return cls(outer=data["outer"], holes=tuple(data.get("holes", ())))


@dataclass(frozen=True)
class StudyRegion:
    """Study area A: a polygon with holes, plus its derived net area."""

    boundary: Polygon
    area: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "area", polygon_area(self.boundary))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the outer ring."""
        outer = self.boundary.outer
        return (
            float(outer[:, 0].min()),
            float(outer[:, 1].min()),
            float(outer[:, 0].max()),
            float(outer[:, 1].max()),
        )

    @property
    def diameter(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return float(np.hypot(xmax - xmin, ymax - ymin))

    def contains_points(self, points) -> np.ndarray:
        return self.boundary.contains_points(points)

    @classmethod
    def from_dict(cls, data: dict) -> "StudyRegion":
        return cls(boundary=Polygon.from_dict(data))

    def to_dict(self) -> dict:
        return self.boundary.to_dict()


@dataclass(frozen=True)
class RectPlot:
    """Axis-aligned rectangular sample plot."""

    centroid: np.ndarray
    side_x: float
    side_y: float

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=float).reshape(2)
        c.setflags(write=False)
        object.__setattr__(self, "centroid", c)
        if not (self.side_x > 0 and self.side_y > 0):
            raise InvalidGeometry("plot sides must be positive")

    @property
    def area(self) -> float:
        return self.side_x * self.side_y

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.centroid
        hx, hy = self.side_x / 2.0, self.side_y / 2.0
        return (cx - hx, cy - hy, cx + hx, cy + hy)

    def corners(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bounds
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


@dataclass(frozen=True)
class PlotCount:
    """One sampled plot: centroid, area, and the observed count."""

    centroid: np.ndarray
    area: float
    count: int

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=float).reshape(2)
        c.setflags(write=False)
        object.__setattr__(self, "centroid", c)
        if not self.area > 0:
            raise InvalidGeometry("plot area must be positive")
        if self.count < 0 or int(self.count) != self.count:
            raise InvalidGeometry("count must be a non-negative integer")
        object.__setattr__(self, "count", int(self.count))


def plot_counts(plots, counts) -> list[PlotCount]:
    """Pair a fixed plot layout with observed counts."""
    counts = np.asarray(counts)
    if len(counts) != len(plots):
        raise InvalidGeometry("one count per plot required")
    return [
        PlotCount(centroid=p.centroid, area=p.area, count=int(c))
        for p, c in zip(plots, counts)
    ]


@dataclass(frozen=True)
class PredictionGrid:
    """Riemann grid over the unsampled part of the region.

    ``cell_area * n_p == unsampled_area`` holds exactly by construction:
    the cell area is defined as the (analytic) unsampled area divided by
    the number of retained lattice points.
    """

    points: np.ndarray
    cell_area: float
    n_p: int
    unsampled_area: float

    def __post_init__(self):
        pts = _as_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "n_p", int(self.n_p))


# -- operations ---------------------------------------------------------------


def polygon_area(poly: Polygon) -> float:
    """Net shoelace area: outer ring minus the sum of the holes."""
    area = _ring_area(poly.outer) - sum(_ring_area(h) for h in poly.holes)
    if area <= 0:
        raise InvalidGeometry("polygon has non-positive net area")
    return area


def contains(region: StudyRegion, point) -> bool:
    """Boundary-inclusive containment of a single point in the region."""
    return bool(region.contains_points(point)[0])


def convex_hull(points) -> Polygon:
    """Smallest convex polygon containing the points, vertices CCW.

    Andrew's monotone chain on the lexicographically sorted unique points.
    Raises ``DegenerateHull`` for fewer than 3 points or collinear input.
    """
    pts = np.unique(_as_points(points), axis=0)
    if len(pts) < 3:
        raise DegenerateHull("need at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateHull("all points are collinear")
    return Polygon(outer=hull)


def _lattice(bounds, spacing) -> np.ndarray:
    """Cell-center lattice anchored at the bounding box lower-left corner."""
    xmin, ymin, xmax, ymax = bounds
    nx = int(np.floor((xmax - xmin) / spacing + 1e-12))
    ny = int(np.floor((ymax - ymin) / spacing + 1e-12))
    xs = xmin + (np.arange(max(nx, 1)) + 0.5) * spacing
    ys = ymin + (np.arange(max(ny, 1)) + 0.5) * spacing
    xs = xs[xs <= xmax]
    ys = ys[ys <= ymax]
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def systematic_grid(region: StudyRegion, target_count: int) -> np.ndarray:
    """Square lattice clipped to the region, sized near ``target_count``.

    The spacing starts at ``sqrt(area / target_count)`` and is refined until
    the clipped count is within a factor of two of the target.  Deterministic
    for fixed inputs (lattice anchored at the bounding-box lower-left).
    """
    if target_count < 1:
        raise InvalidGeometry("target_count must be >= 1")
    if not region.area > 0:
        raise InvalidGeometry("region has zero area")
    spacing = float(np.sqrt(region.area / target_count))
    for _ in range(16):
        lattice = _lattice(region.bounds, spacing)
        points = lattice[region.contains_points(lattice)]
        n = len(points)
        if target_count / 2 <= n <= 2 * target_count:
            return points
        # shrink toward more points; growth factor capped to avoid thrashing
        factor = np.sqrt(n / target_count) if n > 0 else 0.5
        spacing *= min(max(factor, 0.25), 2.0)
    raise InvalidGeometry("could not place a grid near the target count")


def points_in_any_plot(points, plots) -> np.ndarray:
    """True where a point lies inside (or on the edge of) any plot footprint."""
    pts = _as_points(points)
    if not plots:
        return np.zeros(len(pts), dtype=bool)
    bounds = np.array([p.bounds for p in plots])  # (k, 4)
    hit = np.zeros(len(pts), dtype=bool)
    for lo in range(0, len(pts), _CHUNK):
        block = pts[lo:lo + _CHUNK]
        px = block[:, 0, None]
        py = block[:, 1, None]
        inside = (
            (px >= bounds[:, 0]) & (px <= bounds[:, 2])
            & (py >= bounds[:, 1]) & (py <= bounds[:, 3])
        )
        hit[lo:lo + _CHUNK] = inside.any(axis=1)
    return hit


def require_plots_inside(region: StudyRegion, plots) -> None:
    """Raise ``PlotOutsideRegion`` unless every plot footprint is in the region.

    Checks the four corners and the centroid of each plot; boundary contact
    counts as inside (closed region), so plots flush with the region edge are
    legal.
    """
    for i, plot in enumerate(plots):
        probe = np.vstack([plot.corners(), plot.centroid])
        if not np.all(region.contains_points(probe)):
            raise PlotOutsideRegion(f"plot {i} at {tuple(plot.centroid)} is not inside the region")


def prediction_grid(region: StudyRegion, plots, n_p_target: int = 10_000) -> PredictionGrid:
    """Dense lattice over the unsampled area (region minus plot footprints).

    ``unsampled_area`` is the analytic value ``|A| - sum(|B_i|)``; the cell
    area is that divided by the retained point count, so the Riemann weights
    integrate to exactly the unsampled area.  Raises ``EmptyUnsampledRegion``
    when the plots tile the region (callers treat the unsampled total as 0).
    """
    if n_p_target < 100:
        raise InvalidGeometry("n_p_target must be >= 100")
    plots = list(plots)
    require_plots_inside(region, plots)
    unsampled = region.area - sum(p.area for p in plots)
    if unsampled <= 1e-12 * region.area:
        raise EmptyUnsampledRegion("plots tile the study region")

    spacing = float(np.sqrt(unsampled / n_p_target))
    for _ in range(16):
        lattice = _lattice(region.bounds, spacing)
        keep = region.contains_points(lattice) & ~points_in_any_plot(lattice, plots)
        points = lattice[keep]
        n = len(points)
        if n_p_target / 2 <= n <= 2 * n_p_target:
            return PredictionGrid(
                points=points,
                cell_area=unsampled / n,
                n_p=n,
                unsampled_area=unsampled,
            )
        factor = np.sqrt(n / n_p_target) if n > 0 else 0.5
        spacing *= min(max(factor, 0.25), 2.0)
    # unsampled area is a sliver thinner than any affordable lattice
    raise EmptyUnsampledRegion("unsampled area too thin to grid")


def square_region(side: float, origin=(0.0, 0.0)) -> StudyRegion:
    """Axis-aligned square study region (the simulation experiments' A)."""
    x0, y0 = origin
    ring = [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    return StudyRegion(boundary=Polygon(outer=ring))
