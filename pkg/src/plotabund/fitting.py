"""Outer optimization of the kernel ranges with IWLS nested inside.

The two range parameters are optimized by Nelder-Mead in a transformed space:
each range maps to an open box through a scaled logistic, so the simplex can
roam all of R^2 while the ranges stay strictly inside their bounds.  The fine
range is confined to [0.5, 3] times the minimum fine-knot spacing; the coarse
range lives between the current fine range (a sliding lower bound, re-applied
at every objective call) and 3 times the minimum coarse-knot spacing.  Every
objective evaluation rebuilds the kernel columns from cached squared distances
and runs IWLS to refit the regression coefficients: block-wise coordinate
descent with an inner exact solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix, RangePair, design_from_squared, squared_distances
from .errors import (
    DomainError,
    FitFailure,
    InvalidRange,
    NoSignal,
    NotConverged,
    NumericOverflow,
    PlotOutsideRegion,
    SingularSystem,
)
from .geometry import StudyRegion, _as_points
from .glm import PoissonFit, iwls
from .knots import KnotSet, place_knots

NM_COEFFS = (1.0, 2.0, 0.5, 0.5)  # reflection, expansion, contraction, shrink


@dataclass(frozen=True)
class FitConfig:
    """Knobs for one model fit."""

    k_coarse: int = 4
    k_fine: int = 15
    knot_seed: int = 0
    nm_tol: float = 1e-6
    nm_max_eval: int = 500
    rho_init_frac: float = 0.5

    def __post_init__(self):
        if not self.nm_tol > 0:
            raise ValueError("nm_tol must be positive")
        if self.nm_max_eval < 50:
            raise ValueError("nm_max_eval must be >= 50")
        if not 0 < self.rho_init_frac < 1:
            raise ValueError("rho_init_frac must be in (0, 1)")


@dataclass(frozen=True)
class RhoBounds:
    """Feasible box for the kernel ranges.

    The coarse upper bound is clamped to stay above the fine upper bound so
    the coarse interval is never empty, even for odd knot geometries where
    the fine knots are spread wider than the coarse ones.
    """

    fine_lo: float
    fine_hi: float
    coarse_hi: float

    def coarse_interval(self, rho_fine: float) -> tuple[float, float]:
        return rho_fine, self.coarse_hi


def rho_bounds(knots: KnotSet) -> RhoBounds:
    """Range box from minimum knot spacings: fine in [0.5d, 3d], coarse below 3d."""
    d_fine = knots.min_dist_fine
    d_coarse = knots.min_dist_coarse
    fine_hi = 3.0 * d_fine
    return RhoBounds(
        fine_lo=0.5 * d_fine,
        fine_hi=fine_hi,
        coarse_hi=max(3.0 * d_coarse, 1.001 * fine_hi),
    )


def expit_box(u: float, lo: float, hi: float) -> float:
    """Map an unconstrained value into the open interval (lo, hi)."""
    if not lo < hi:
        raise DomainError("empty interval")
    if u >= 0:
        t = 1.0 / (1.0 + math.exp(-u))
    else:
        e = math.exp(u)
        t = e / (1.0 + e)
    return lo + (hi - lo) * t


def logit_box(x: float, lo: float, hi: float) -> float:
    """Inverse of ``expit_box``; requires ``x`` strictly inside (lo, hi)."""
    if not lo < hi:
        raise DomainError("empty interval")
    if not lo < x < hi:
        raise DomainError(f"{x} outside ({lo}, {hi})")
    t = (x - lo) / (hi - lo)
    return math.log(t / (1.0 - t))


@dataclass
class NMResult:
    x: np.ndarray
    f: float
    evals: int
    converged: bool


def nelder_mead(objective, x0, step: float = 0.5, f_tol: float = 1e-6,
                max_eval: int = 500) -> NMResult:
    """Minimize with a plain Nelder-Mead simplex (standard coefficients).

    Convergence is declared when the objective spread across the simplex
    falls below ``f_tol``.  Returns the best point ever evaluated, which is
    never worse than the starting vertex.  Infinite objective values are
    legal; they lose every comparison.
    """
    alpha, gamma, beta, sigma = NM_COEFFS
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)

    best = {"x": x0.copy(), "f": np.inf}
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        val = objective(x)
        if val < best["f"]:
            best["x"], best["f"] = x.copy(), val
        return val

    sim = [x0] + [x0 + step * np.eye(n)[i] for i in range(n)]
    sim = np.asarray(sim)
    fsim = np.array([f(x) for x in sim])

    converged = False
    while evals < max_eval:
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        spread = fsim[-1] - fsim[0]
        if np.isfinite(spread) and spread < f_tol:
            converged = True
            break

        centroid = sim[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - sim[-1])
        fr = f(xr)
        if fr < fsim[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            if fr < fsim[-1]:
                xc = centroid + beta * (xr - centroid)
            else:
                xc = centroid + beta * (sim[-1] - centroid)
            fc = f(xc)
            if fc < min(fr, fsim[-1]):
                sim[-1], fsim[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + sigma * (sim[i] - sim[0])
                    fsim[i] = f(sim[i])

    return NMResult(x=best["x"], f=best["f"], evals=evals, converged=converged)


@dataclass(frozen=True)
class ModelFit:
    """A fitted intensity model: coefficients, ranges, knots, and diagnostics."""

    poisson: PoissonFit
    rho: RangePair
    knots: KnotSet
    design: DesignMatrix
    nll: float
    nm_evals: int
    status: str  # "converged" or "failed: <reason>"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def theta(self) -> np.ndarray:
        return self.poisson.theta


def fit_model(plots, region: StudyRegion, cfg: FitConfig) -> ModelFit:
    """Fit the two-scale intensity model to plot counts.

    Knots are placed from the data (fine knots restricted to the hull of the
    nonzero-count centroids), then Nelder-Mead searches the two transformed
    range parameters with a full IWLS refit inside every objective call.
    Raises ``NoSignal`` when every count is zero and ``FitFailure`` when no
    vertex ever produced a successful inner fit.
    """
    plots = list(plots)
    centroids = _as_points([p.centroid for p in plots])
    counts = np.array([p.count for p in plots], dtype=float)
    areas = np.array([p.area for p in plots], dtype=float)
    if counts.sum() == 0:
        raise NoSignal("all plot counts are zero")
    if not np.all(region.contains_points(centroids)):
        raise PlotOutsideRegion("plot centroid outside the study region")
    offsets = np.log(areas)

    nonzero = centroids[counts > 0]
    pad = float(np.sqrt(areas.max()))
    knots = place_knots(region, nonzero, cfg.k_coarse, cfg.k_fine, cfg.knot_seed,
                        fallback_pad=pad)
    bounds = rho_bounds(knots)
    d2c, d2f = squared_distances(centroids, knots)

    def to_rho(v) -> RangePair:
        rho_f = expit_box(v[0], bounds.fine_lo, bounds.fine_hi)
        lo_c, hi_c = bounds.coarse_interval(rho_f)
        rho_c = expit_box(v[1], lo_c, hi_c)
        return RangePair(rho_coarse=rho_c, rho_fine=rho_f)

    best_inner: dict = {"nll": np.inf, "fit": None, "rho": None}

    def objective(v) -> float:
        try:
            rho = to_rho(v)
            inner = iwls(design_from_squared(d2c, d2f, rho), counts, offsets)
        except (SingularSystem, NumericOverflow, NotConverged, InvalidRange):
            return np.inf
        if inner.nll < best_inner["nll"]:
            best_inner.update(nll=inner.nll, fit=inner, rho=rho)
        return inner.nll

    # rho_init_frac of each box maps to logit(frac) in transformed coordinates
    u_init = logit_box(cfg.rho_init_frac, 0.0, 1.0)
    result = nelder_mead(
        objective,
        x0=np.array([u_init, u_init]),
        step=0.5,
        f_tol=cfg.nm_tol,
        max_eval=cfg.nm_max_eval,
    )

    if best_inner["fit"] is None:
        raise FitFailure("inner IWLS failed at every simplex vertex")

    rho = best_inner["rho"]
    inner = best_inner["fit"]
    design = DesignMatrix(values=design_from_squared(d2c, d2f, rho), knot_ref=knots, rho=rho)
    status = "converged" if result.converged else "failed: nm_budget_exhausted"
    return ModelFit(
        poisson=inner,
        rho=rho,
        knots=knots,
        design=design,
        nll=inner.nll,
        nm_evals=result.evals,
        status=status,
    )
