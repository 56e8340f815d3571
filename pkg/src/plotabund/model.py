"""Scikit-learn-style facade over the fit/estimate pipeline.

``AbundanceEstimator`` wires knot placement, the range optimization, the
prediction grid, and the report assembly into a single fit/predict object
with ``get_params``/``set_params`` from ``sklearn.base.BaseEstimator``, so it
drops into pipelines, cloning, and parameter search like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import EmptyUnsampledRegion
from .estimator import abundance_report, intensity_at
from .fitting import FitConfig, fit_model
from .geometry import StudyRegion, prediction_grid, require_plots_inside
from .validation import as_plot_counts, as_rect_plots, check_centroids


class AbundanceEstimator(BaseEstimator):
    """Realized-abundance estimator over a study region.

    Parameters
    ----------
    knots_coarse, knots_fine : int
        Number of knots at each scale.
    knot_seed : int
        Seed for the deterministic knot-placement clustering.
    grid_points : int
        Target size of the prediction grid over the unsampled area.
    trim_p : float
        Trim proportion for the trimmed overdispersion estimators.
    ci_levels : tuple of float
        Confidence levels reported.
    nm_tol, nm_max_eval, rho_init_frac : float, int, float
        Range-optimizer settings; see ``fitting.FitConfig``.

    Attributes (after ``fit``)
    ----------
    fit_ : ModelFit
        Fitted coefficients, ranges, knots, and diagnostics.
    report_ : AbundanceReport
        Point estimate, variance components, inflation factors, intervals.
    total_, observed_, predicted_unsampled_ : float
        Headline abundance numbers.
    """

    def __init__(self, knots_coarse=4, knots_fine=15, knot_seed=0,
                 grid_points=10_000, trim_p=0.75, ci_levels=(0.90, 0.95),
                 nm_tol=1e-6, nm_max_eval=500, rho_init_frac=0.5):
        self.knots_coarse = knots_coarse
        self.knots_fine = knots_fine
        self.knot_seed = knot_seed
        self.grid_points = grid_points
        self.trim_p = trim_p
        self.ci_levels = ci_levels
        self.nm_tol = nm_tol
        self.nm_max_eval = nm_max_eval
        self.rho_init_frac = rho_init_frac

    def fit(self, X, y, *, region, sides):
        """Fit the intensity model and assemble the abundance report.

        Parameters
        ----------
        X : (n, 2) array
            Plot centroids.
        y : (n,) array
            Observed counts per plot.
        region : StudyRegion or polygon dict
            Study area (``{"outer": [...], "holes": [...]}`` also accepted).
        sides : scalar, (2,), or (n, 2)
            Plot side lengths; a scalar means square plots of that side.
        """
        if isinstance(region, dict):
            region = StudyRegion.from_dict(region)
        rect_plots = as_rect_plots(X, sides)
        require_plots_inside(region, rect_plots)
        counts = as_plot_counts(X, y, sides)

        cfg = FitConfig(
            k_coarse=self.knots_coarse,
            k_fine=self.knots_fine,
            knot_seed=self.knot_seed,
            nm_tol=self.nm_tol,
            nm_max_eval=self.nm_max_eval,
            rho_init_frac=self.rho_init_frac,
        )
        self.fit_ = fit_model(counts, region, cfg)
        try:
            self.grid_ = prediction_grid(region, rect_plots, self.grid_points)
        except EmptyUnsampledRegion:
            self.grid_ = None
        self.report_ = abundance_report(
            counts, self.fit_, self.grid_,
            trim_p=self.trim_p, levels=tuple(self.ci_levels),
        )
        self.region_ = region
        self.observed_ = self.report_.observed
        self.predicted_unsampled_ = self.report_.predicted_u
        self.total_ = self.report_.total
        return self

    def _check_fitted(self):
        if not hasattr(self, "fit_"):
            raise NotFittedError("call fit before using this estimator")

    def predict(self, X) -> np.ndarray:
        """Fitted intensity (expected count per unit area) at locations ``X``."""
        self._check_fitted()
        return np.asarray(intensity_at(self.fit_, check_centroids(X)))

    def confidence_interval(self, kind: str = "tg", level: float = 0.95):
        self._check_fitted()
        return self.report_.ci[(kind, level)]
