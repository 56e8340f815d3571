"""Gaussian radial basis evaluation and design-matrix construction.

The design matrix is ``X = [1 | Z_C | Z_F]``: an intercept column followed by
one Gaussian kernel column per coarse knot (range ``rho_coarse``) and per fine
knot (range ``rho_fine``).  Distances to knots do not depend on the ranges, so
the squared-distance blocks can be cached and re-exponentiated cheaply while
an optimizer moves the ranges around.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRange
from .geometry import _as_points
from .knots import KnotSet


@dataclass(frozen=True)
class RangePair:
    """Kernel ranges for the two scales; the coarse range must dominate."""

    rho_coarse: float
    rho_fine: float

    def __post_init__(self):
        if not self.rho_fine > 0:
            raise InvalidRange("rho_fine must be positive")
        if not self.rho_coarse > self.rho_fine:
            raise InvalidRange("rho_coarse must exceed rho_fine")


@dataclass(frozen=True)
class DesignMatrix:
    """Rows of basis values for a set of locations against a knot set."""

    values: np.ndarray
    knot_ref: KnotSet
    rho: RangePair

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def gaussian_basis(h, rho: float):
    """Gaussian kernel ``exp(-h^2 / rho)`` of distance ``h``, in (0, 1]."""
    if not rho > 0:
        raise InvalidRange("rho must be positive")
    h = np.asarray(h, dtype=float)
    out = np.exp(-(h * h) / rho)
    return float(out) if out.ndim == 0 else out


def squared_distances(locs, knots: KnotSet) -> tuple[np.ndarray, np.ndarray]:
    """Squared distances from each location to every coarse and fine knot."""
    pts = _as_points(locs)

    def d2(knot_pts):
        diff = pts[:, None, :] - knot_pts[None, :, :]
        return np.sum(diff * diff, axis=-1)

    return d2(knots.coarse), d2(knots.fine)


def design_from_squared(d2_coarse, d2_fine, rho: RangePair) -> np.ndarray:
    """Assemble ``[1 | exp(-d2_C/rho_C) | exp(-d2_F/rho_F)]`` from cached blocks."""
    n = d2_coarse.shape[0]
    return np.hstack([
        np.ones((n, 1)),
        np.exp(-d2_coarse / rho.rho_coarse),
        np.exp(-d2_fine / rho.rho_fine),
    ])


def design_matrix(locs, knots: KnotSet, rho: RangePair) -> DesignMatrix:
    """Design matrix for ``locs``: intercept plus two blocks of kernel columns."""
    d2c, d2f = squared_distances(locs, knots)
    return DesignMatrix(values=design_from_squared(d2c, d2f, rho), knot_ref=knots, rho=rho)
