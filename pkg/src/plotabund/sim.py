"""Simulation experiments and the Monte Carlo evaluation harness.

Four generators produce point patterns over a 10 x 10 square with a fixed
plot layout held constant across replicates:

1. linear-trend intensity, full 16 x 16 grid of 0.3-side plots (23.04% cover);
2. same intensity, one column and two rows of plots removed (unbalanced,
   210 plots, 18.9% cover);
3. two-scale cluster process seeded inside a random inner rectangle, plots as
   in experiment 2;
4. cluster processes on two random inner rectangles, 600 plots of side 0.14
   with the same column/row removal (11.8% cover).

Every replicate draws from its own generator substream derived from
``(seed, replicate_index)``, so serial and parallel runs agree bit for bit.
The harness fits the model to each replicate, evaluates bias, RMSPE, 90%
coverage per variance flavor (z = 1.645), and a fail rate; failed replicates
are excluded from the averages and reported in the rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import PlotabundError, UnsupportedForSRS
from .estimator import (
    abundance_report,
    confidence_interval,
    omega_tg,
    sigma_tilde,
)
from .fitting import FitConfig, ModelFit, fit_model
from .geometry import (
    Polygon,
    RectPlot,
    StudyRegion,
    plot_counts,
    prediction_grid,
    square_region,
)

Z90 = 1.645  # conventional 90% normal quantile used by the coverage checks

REGION_SIDE = 10.0
_DROP_COLUMN = 1
_DROP_ROWS = (1, 2)

_CHUNK = 4096


@dataclass(frozen=True)
class ExperimentSpec:
    """One harness run: which generator, how many replicates, which knots."""

    experiment: int
    replicates: int = 200
    seed: int = 0
    knot_configs: tuple[tuple[int, int], ...] = ((3, 8),)
    trim_p: float = 0.75
    n_p_target: int = 10_000
    fail_expansion_ratio: float = 10.0  # fail when total > ratio * expansion estimate
    fail_se_ratio: float = 1.0          # fail when a checked se > ratio * total
    # the literal trimmed-information variance ("tl") inflates by construction
    # whenever trimming removes all support for some basis direction, so it is
    # not a useful brokenness signal and is excluded from the default checks
    fail_se_kinds: tuple[str, ...] = ("base", "od", "wr", "tg")

    def __post_init__(self):
        if self.experiment not in (1, 2, 3, 4):
            raise ValueError("experiment must be 1..4")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


@dataclass(frozen=True)
class SimReplicate:
    """One simulated data set: the realized pattern and the plot counts."""

    points: np.ndarray
    plots: tuple[RectPlot, ...]
    counts: np.ndarray
    true_total: int


@dataclass
class HarnessResult:
    """Aggregate metrics for one configuration."""

    bias: float
    rmspe: float
    ci90: dict[str, float]
    fail_rate: float
    n_used: int
    replicates: list[dict] = field(default_factory=list)


@dataclass
class HarnessRun:
    """All results from one harness invocation."""

    srs: HarnessResult
    by_config: dict[tuple[int, int], HarnessResult]


# -- layouts and generators ---------------------------------------------------


def _grid_plots(n_side: int, plot_side: float, drop_column=None, drop_rows=()):
    spacing = REGION_SIDE / n_side
    centers = (np.arange(n_side) + 0.5) * spacing
    plots = []
    for j, cy in enumerate(centers):
        if j in drop_rows:
            continue
        for i, cx in enumerate(centers):
            if i == drop_column:
                continue
            plots.append(RectPlot(centroid=(cx, cy), side_x=plot_side, side_y=plot_side))
    return tuple(plots)


def experiment_layout(experiment: int) -> tuple[StudyRegion, tuple[RectPlot, ...]]:
    """Fixed study region and plot layout for an experiment."""
    region = square_region(REGION_SIDE)
    if experiment == 1:
        return region, _grid_plots(16, 0.3)
    if experiment in (2, 3):
        return region, _grid_plots(16, 0.3, drop_column=_DROP_COLUMN, drop_rows=_DROP_ROWS)
    if experiment == 4:
        return region, _grid_plots(26, 0.14, drop_column=_DROP_COLUMN, drop_rows=_DROP_ROWS)
    raise ValueError("experiment must be 1..4")


def thin_linear(points, rng) -> np.ndarray:
    """Independent thinning keeping each point with probability (x + y) / 20."""
    pts = np.asarray(points, dtype=float)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    z = rng.uniform(size=len(pts))
    return pts[z < (pts[:, 0] + pts[:, 1]) / 20.0]


def tally_counts(points, plots) -> np.ndarray:
    """Points falling in each (disjoint) plot footprint."""
    pts = np.asarray(points, dtype=float)
    bounds = np.array([p.bounds for p in plots])
    counts = np.zeros(len(plots), dtype=int)
    for lo in range(0, len(pts), _CHUNK):
        block = pts[lo:lo + _CHUNK]
        px = block[:, 0, None]
        py = block[:, 1, None]
        inside = (
            (px >= bounds[:, 0]) & (px <= bounds[:, 2])
            & (py >= bounds[:, 1]) & (py <= bounds[:, 3])
        )
        counts += inside.sum(axis=0)
    return counts


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, index, 0)))


def _replicate_knot_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=(seed, index, 1)).generate_state(1)[0])


def _cluster_points(rng, rect, n_parents: int, mean_children: float, box_side: float):
    """Children of uniform parents, uniform on boxes centered at each parent."""
    lo_x, lo_y, hi_x, hi_y = rect
    parents = np.column_stack([
        rng.uniform(lo_x, hi_x, size=n_parents),
        rng.uniform(lo_y, hi_y, size=n_parents),
    ])
    litter = rng.poisson(mean_children, size=n_parents)
    reps = np.repeat(np.arange(n_parents), litter)
    offsets = rng.uniform(-box_side / 2.0, box_side / 2.0, size=(len(reps), 2))
    return parents[reps] + offsets


def _random_rect(rng, lo_range, hi_range):
    """(lo_x, lo_y, hi_x, hi_y) with each bound drawn from its own uniform."""
    lo_x = rng.uniform(*lo_range)
    lo_y = rng.uniform(*lo_range)
    hi_x = rng.uniform(*hi_range)
    hi_y = rng.uniform(*hi_range)
    return lo_x, lo_y, hi_x, hi_y


def generate_replicate(experiment: int, seed: int, index: int = 0) -> SimReplicate:
    """Simulate one data set for an experiment, seeded by (seed, index)."""
    rng = _replicate_rng(seed, index)
    region, plots = experiment_layout(experiment)

    if experiment in (1, 2):
        proposals = rng.uniform(0.0, REGION_SIDE, size=(2000, 2))
        points = thin_linear(proposals, rng)
    elif experiment == 3:
        rect = _random_rect(rng, (3.5, 4.5), (7.5, 8.5))
        raw = np.vstack([
            _cluster_points(rng, rect, 100, 15.0, 2.0),
            _cluster_points(rng, rect, 25, 9.0, 0.4),
        ])
        points = thin_linear(raw, rng)
    elif experiment == 4:
        rect1 = _random_rect(rng, (5.8, 6.2), (7.8, 8.2))
        lo_x = rng.uniform(0.8, 1.2)
        hi_x = rng.uniform(3.8, 4.2)
        lo_y = rng.uniform(4.8, 5.2)
        hi_y = rng.uniform(7.8, 8.2)
        rect2 = (lo_x, lo_y, hi_x, hi_y)
        raw = np.vstack([
            _cluster_points(rng, rect1, 75, 14.0, 2.0),
            _cluster_points(rng, rect1, 25, 8.0, 0.4),
            _cluster_points(rng, rect2, 25, 14.0, 1.0),
            _cluster_points(rng, rect2, 10, 8.0, 0.4),
        ])
        points = thin_linear(raw, rng)
    else:
        raise ValueError("experiment must be 1..4")

    true_total = int(region.contains_points(points).sum()) if len(points) else 0
    counts = tally_counts(points, plots)
    return SimReplicate(points=points, plots=plots, counts=counts, true_total=true_total)


# -- SRS benchmark --------------------------------------------------------------


def srs_estimate(plots, region: StudyRegion) -> tuple[float, float]:
    """Expansion estimate and finite-population variance for equal-area plots."""
    plots = list(plots)
    if len(plots) < 2:
        raise UnsupportedForSRS("need at least two plots")
    areas = np.array([p.area for p in plots], dtype=float)
    if not np.allclose(areas, areas[0], rtol=1e-12, atol=0.0):
        raise UnsupportedForSRS("plot areas must be equal for the SRS expansion")
    y = np.array([p.count for p in plots], dtype=float)
    n = len(y)
    total_units = region.area / areas[0]
    estimate = region.area * y.sum() / areas.sum()
    s2 = float(np.var(y, ddof=1))
    variance = total_units ** 2 * (s2 / n) * (1.0 - n / total_units)
    return float(estimate), float(variance)


# -- harness --------------------------------------------------------------------

_FIXTURE_CACHE: dict = {}


def _experiment_fixture(experiment: int, n_p_target: int):
    key = (experiment, n_p_target)
    if key not in _FIXTURE_CACHE:
        region, plots = experiment_layout(experiment)
        grid = prediction_grid(region, plots, n_p_target)
        _FIXTURE_CACHE[key] = (region, plots, grid)
    return _FIXTURE_CACHE[key]


def _covered(t_hat: float, variance: float, true_total: float) -> bool:
    lo, hi = confidence_interval(t_hat, variance, 0.90, z=Z90)
    return lo < true_total < hi


def _covered_symmetric(t_hat: float, variance: float, true_total: float) -> bool:
    """Classical symmetric interval, used for the SRS benchmark."""
    half = Z90 * math.sqrt(variance)
    return t_hat - half < true_total < t_hat + half


def _fit_and_report(rep: SimReplicate, region, grid, k_coarse, k_fine, knot_seed,
                    trim_p, p_values):
    """Fit one config; return the per-replicate record (failures are data)."""
    pcounts = plot_counts(rep.plots, rep.counts)
    record: dict = {"failed": False, "reason": ""}
    try:
        cfg = FitConfig(k_coarse=k_coarse, k_fine=k_fine, knot_seed=knot_seed)
        fit = fit_model(pcounts, region, cfg)
        report = abundance_report(pcounts, fit, grid, trim_p=trim_p)
    except PlotabundError as exc:
        record.update(failed=True, reason=f"{type(exc).__name__}: {exc}")
        return record
    if not fit.converged:
        record.update(failed=True, reason=fit.status)
        return record

    t_hat = report.total
    mspe = report.mspe
    record["t_hat"] = t_hat
    record["variances"] = {
        "base": mspe,
        "od": report.omega["od"] * mspe,
        "wr": report.omega["wr"] * mspe,
        "tg": report.omega["tg"] * mspe,
        "tl": report.omega["tl"] * mspe,
    }
    if p_values is not None:
        record["sweep"] = _sweep_variances(rep, fit, report, p_values)
    return record


def _sweep_variances(rep: SimReplicate, fit: ModelFit, report, p_values):
    """Trimmed variances for every trim proportion from a single fit."""
    y = rep.counts.astype(float)
    phi = fit.poisson.mu_hat
    mu_u = report.components.mu_u
    quad = report.components.quad
    c = report.components.c
    out = {}
    for p in p_values:
        w_tg = omega_tg(y, phi, p)
        try:
            quad_t = float(c @ sigma_tilde(fit, p) @ c)
        except PlotabundError:
            quad_t = quad
        out[p] = {
            "tg": w_tg * (mu_u + quad),
            "tl": w_tg * (mu_u + quad_t),
        }
    return out


def _run_replicate(args) -> dict:
    (spec, index, p_values, estimate_fn) = args
    region, plots, grid = _experiment_fixture(spec.experiment, spec.n_p_target)
    rep = generate_replicate(spec.experiment, spec.seed, index)
    knot_seed = _replicate_knot_seed(spec.seed, index)
    pcounts = plot_counts(plots, rep.counts)

    srs_total, srs_var = srs_estimate(pcounts, region)
    # the common failure checks skip the sweep-dependent kinds; those are
    # re-checked per trim proportion by trim_sweep
    checked = spec.fail_se_kinds if p_values is None else tuple(
        k for k in spec.fail_se_kinds if k not in ("tg", "tl")
    )
    out = {
        "index": index,
        "true_total": rep.true_total,
        "srs": {"t_hat": srs_total, "variance": srs_var},
        "configs": {},
    }
    for (k_coarse, k_fine) in spec.knot_configs:
        if estimate_fn is not None:
            t_hat, variances = estimate_fn(rep)
            record = {"failed": False, "reason": "", "t_hat": t_hat,
                      "variances": dict(variances)}
            checked = tuple(variances)
        else:
            record = _fit_and_report(rep, region, grid, k_coarse, k_fine,
                                     knot_seed, spec.trim_p, p_values)
        if not record["failed"]:
            _apply_failure_rules(record, srs_total, checked,
                                 spec.fail_expansion_ratio, spec.fail_se_ratio)
        out["configs"][(k_coarse, k_fine)] = record
    return out


def _apply_failure_rules(record, expansion_estimate, kinds,
                         expansion_ratio=10.0, se_ratio=1.0):
    """Mark estimates that are absurdly large relative to sane yardsticks."""
    t_hat = record["t_hat"]
    if expansion_estimate > 0 and t_hat > expansion_ratio * expansion_estimate:
        record.update(failed=True, reason="estimate_exceeds_expansion")
        return
    for kind in kinds:
        if math.sqrt(record["variances"][kind]) > se_ratio * t_hat:
            record.update(failed=True, reason=f"se_exceeds_estimate:{kind}")
            return


def _aggregate(records: list[dict], kinds, variance_of, covered=_covered) -> HarnessResult:
    """Bias, RMSPE, coverage, and fail rate from per-replicate records."""
    total = len(records)
    used = [r for r in records if not r["failed"]]
    if used:
        err = np.array([r["t_hat"] - r["true_total"] for r in used])
        bias = float(err.mean())
        rmspe = float(np.sqrt(np.mean(err ** 2)))
        ci90 = {
            k: float(np.mean([
                covered(r["t_hat"], variance_of(r, k), r["true_total"]) for r in used
            ]))
            for k in kinds
        }
    else:
        bias = rmspe = float("nan")
        ci90 = {k: float("nan") for k in kinds}
    return HarnessResult(
        bias=bias,
        rmspe=rmspe,
        ci90=ci90,
        fail_rate=(total - len(used)) / total,
        n_used=len(used),
        replicates=records,
    )


def _map_replicates(spec: ExperimentSpec, p_values, workers, estimate_fn):
    tasks = [(spec, t, p_values, estimate_fn) for t in range(spec.replicates)]
    if workers is None or workers <= 1:
        results = [_run_replicate(task) for task in tasks]
    else:
        _experiment_fixture(spec.experiment, spec.n_p_target)  # warm before fork
        chunk = max(1, spec.replicates // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, tasks, chunksize=chunk))
    return sorted(results, key=lambda r: r["index"])


def run_harness(spec: ExperimentSpec, workers: int | None = None,
                estimate_fn=None) -> HarnessRun:
    """Run the full evaluation for each knot configuration plus SRS.

    ``estimate_fn`` replaces the model pipeline with a callable
    ``rep -> (t_hat, {kind: variance})`` for oracle checks; failure rules
    still apply to its output.
    """
    results = _map_replicates(spec, None, workers, estimate_fn)

    srs_records = [
        {
            "failed": False,
            "t_hat": r["srs"]["t_hat"],
            "variances": {"base": r["srs"]["variance"]},
            "true_total": r["true_total"],
            "index": r["index"],
        }
        for r in results
    ]
    srs = _aggregate(srs_records, ("base",), lambda r, k: r["variances"]["base"],
                     covered=_covered_symmetric)

    by_config = {}
    for config in spec.knot_configs:
        recs = [
            {**r["configs"][config], "true_total": r["true_total"], "index": r["index"]}
            for r in results
        ]
        kinds = ("base", "od", "wr", "tg", "tl")
        by_config[config] = _aggregate(recs, kinds, lambda r, k: r["variances"][k])
    return HarnessRun(srs=srs, by_config=by_config)


def trim_sweep(spec: ExperimentSpec, p_values, workers: int | None = None
               ) -> dict[float, HarnessResult]:
    """Coverage of the trimmed variants across trim proportions.

    The model is fitted once per replicate (fits do not depend on the trim
    proportion); the trimmed inflation factor and trimmed information matrix
    are then re-evaluated for every ``p``.
    """
    config = spec.knot_configs[0]
    p_values = tuple(float(p) for p in p_values)
    results = _map_replicates(spec, p_values, workers, None)

    out = {}
    for p in p_values:
        recs = []
        for r in results:
            rec = r["configs"][config]
            entry = {"true_total": r["true_total"], "index": r["index"],
                     "failed": rec["failed"], "reason": rec["reason"]}
            if not rec["failed"]:
                entry["t_hat"] = rec["t_hat"]
                entry["variances"] = {
                    "base": rec["variances"]["base"],
                    "od": rec["variances"]["od"],
                    "wr": rec["variances"]["wr"],
                    "tg": rec["sweep"][p]["tg"],
                    "tl": rec["sweep"][p]["tl"],
                }
                # expansion and base/od/wr checks already ran in the worker
                per_p = tuple(k for k in spec.fail_se_kinds if k in ("tg", "tl"))
                _apply_failure_rules(entry, 0.0, per_p,
                                     spec.fail_expansion_ratio, spec.fail_se_ratio)
            recs.append(entry)
        kinds = ("base", "od", "wr", "tg", "tl")
        out[p] = _aggregate(recs, kinds, lambda r, k: r["variances"][k])
    return out


# -- synthetic survey (real-data-scale stand-in) ---------------------------------


def synthetic_survey(seed: int = 0, n_plots: int = 2080):
    """Survey-like dataset at aerial-photo scale: (region, plots, counts).

    A fjord-shaped study area of roughly 80 square km with one open-water
    hole, covered by transect rows of 0.12 x 0.08 km image footprints with
    small along-track gaps.  Counts come from a clustered point process, so
    most plots are zero and the nonzero ones are overdispersed, mimicking
    haul-out survey data.  Deterministic given ``seed``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, "survey")))
    outer = [
        [0.0, 0.0], [13.0, 0.0], [13.0, 4.5], [9.5, 7.5], [4.0, 7.5], [0.0, 4.0],
    ]
    hole = [[2.0, 1.0], [3.4, 1.0], [3.4, 2.2], [2.0, 2.2]]
    region = StudyRegion(boundary=Polygon(outer=outer, holes=(hole,)))

    side_x, side_y = 0.12, 0.08
    gap_x = 0.03
    plots = []
    y = 0.06
    row = 0
    while y < 7.45 and len(plots) < 4 * n_plots:
        x = 0.07 + (0.05 if row % 2 else 0.0)
        while x < 12.95:
            plot = RectPlot(centroid=(x, y), side_x=side_x, side_y=side_y)
            probe = np.vstack([plot.corners(), plot.centroid])
            if bool(np.all(region.contains_points(probe))):
                plots.append(plot)
            x += side_x + gap_x
        y += side_y + float(rng.uniform(0.08, 0.22))
        row += 1
    if len(plots) < n_plots:
        raise ValueError("survey layout produced too few plots")
    keep = rng.choice(len(plots), size=n_plots, replace=False)
    plots = tuple(plots[i] for i in sorted(keep))

    # clustered population concentrated in two patches
    pts = np.vstack([
        _cluster_points(rng, (6.0, 2.0, 9.0, 5.0), 120, 28.0, 1.2),
        _cluster_points(rng, (1.5, 3.0, 3.5, 5.0), 40, 22.0, 0.8),
    ])
    pts = pts[region.contains_points(pts)]
    counts = tally_counts(pts, plots)
    return region, plots, counts
