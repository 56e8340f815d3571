"""Abundance estimation from plot counts via a two-scale basis-function intensity surface."""

from .basis import DesignMatrix, RangePair, design_matrix, gaussian_basis
from .errors import PlotabundError
from .estimator import (
    AbundanceReport,
    VarianceComponents,
    abundance_report,
    c_vector,
    confidence_interval,
    estimate_total,
    intensity_at,
    omega_od,
    omega_tg,
    omega_wr,
    predict_total_U,
    sigma_hat,
    sigma_tilde,
    surface_table,
)
from .fitting import FitConfig, ModelFit, fit_model, logit_box, expit_box, rho_bounds
from .geometry import (
    PlotCount,
    Polygon,
    PredictionGrid,
    RectPlot,
    StudyRegion,
    contains,
    convex_hull,
    plot_counts,
    polygon_area,
    prediction_grid,
    square_region,
    systematic_grid,
)
from .glm import PoissonFit, fisher_information, iwls, neg_log_lik
from .knots import KnotSet, kmeans, place_knots, suggest_knot_counts
from .model import AbundanceEstimator
from .sim import (
    ExperimentSpec,
    HarnessResult,
    HarnessRun,
    SimReplicate,
    generate_replicate,
    run_harness,
    srs_estimate,
    synthetic_survey,
    thin_linear,
    trim_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AbundanceEstimator",
    "AbundanceReport",
    "DesignMatrix",
    "ExperimentSpec",
    "FitConfig",
    "HarnessResult",
    "HarnessRun",
    "KnotSet",
    "ModelFit",
    "PlotCount",
    "PlotabundError",
    "PoissonFit",
    "Polygon",
    "PredictionGrid",
    "RangePair",
    "RectPlot",
    "SimReplicate",
    "StudyRegion",
    "VarianceComponents",
    "abundance_report",
    "c_vector",
    "confidence_interval",
    "contains",
    "convex_hull",
    "design_matrix",
    "estimate_total",
    "expit_box",
    "fisher_information",
    "fit_model",
    "gaussian_basis",
    "generate_replicate",
    "intensity_at",
    "iwls",
    "kmeans",
    "logit_box",
    "neg_log_lik",
    "omega_od",
    "omega_tg",
    "omega_wr",
    "place_knots",
    "plot_counts",
    "polygon_area",
    "predict_total_U",
    "prediction_grid",
    "rho_bounds",
    "run_harness",
    "sigma_hat",
    "sigma_tilde",
    "square_region",
    "srs_estimate",
    "suggest_knot_counts",
    "surface_table",
    "synthetic_survey",
    "systematic_grid",
    "thin_linear",
    "trim_sweep",
]
