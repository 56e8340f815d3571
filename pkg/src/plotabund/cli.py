"""Command-line interface: fit a survey, run experiments, sweep trim proportions.

Subcommands
-----------
fit        plot CSV + region JSON -> report JSON, intensity-surface CSV, summary
simulate   run a simulation experiment -> results CSV + per-replicate JSONL
sweep      trim-proportion sweep on one experiment -> sweep CSV

Exit codes: 0 success, 2 input error, 3 fit failure.  Errors are emitted to
stderr as one JSON object with a machine-readable ``error`` code.  Outputs are
a pure function of inputs, flags, and seeds; the only timestamp lives in a
single header field of the report JSON.

Option precedence is flags > config file (``--config``, JSON) > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .errors import PlotabundError
from .estimator import surface_table
from .geometry import StudyRegion, require_plots_inside
from .model import AbundanceEstimator
from .sim import ExperimentSpec, run_harness, trim_sweep
from .validation import as_rect_plots

_DEFAULTS = {
    "knots_coarse": 4,
    "knots_fine": 15,
    "knot_seed": 0,
    "trim_p": 0.75,
    "grid_points": 10_000,
    "replicates": 200,
    "seed": 0,
    "ci_level": 0.95,
    "workers": 1,
}

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3

PLOT_COLUMNS = ("id", "x", "y", "side_x", "side_y", "count")


class InputError(PlotabundError):
    """Malformed file or option; maps to exit code 2."""


def read_region_json(path) -> StudyRegion:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read region file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    if "outer" not in data:
        raise InputError(f"{path}: region JSON needs an 'outer' ring")
    return StudyRegion.from_dict(data)


def read_plots_csv(path):
    """Plot table -> (ids, centroids, sides, counts); header is required."""
    ids, rows = [], []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(PLOT_COLUMNS) - set(reader.fieldnames):
                raise InputError(
                    f"{path}: header must include columns {', '.join(PLOT_COLUMNS)}"
                )
            for line_no, row in enumerate(reader, start=2):
                try:
                    ids.append(row["id"])
                    rows.append([
                        float(row["x"]), float(row["y"]),
                        float(row["side_x"]), float(row["side_y"]),
                        int(row["count"]),
                    ])
                except (TypeError, ValueError) as exc:
                    raise InputError(f"{path}: line {line_no}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read plot file: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no plot rows")
    arr = np.asarray(rows, dtype=float)
    return ids, arr[:, 0:2], arr[:, 2:4], arr[:, 4].astype(int)


def write_plots_csv(path, plots, counts) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLOT_COLUMNS)
        for i, (plot, count) in enumerate(zip(plots, counts)):
            writer.writerow([
                i, f"{plot.centroid[0]:.10g}", f"{plot.centroid[1]:.10g}",
                f"{plot.side_x:.10g}", f"{plot.side_y:.10g}", int(count),
            ])


def _summary_lines(report, ci_level) -> list[str]:
    lines = [
        f"observed count        {report.observed:.0f}",
        f"predicted unsampled   {report.predicted_u:.2f}",
        f"estimated total       {report.total:.2f}",
        f"sqrt(MSPE)            {np.sqrt(report.mspe):.2f}",
        f"trim proportion       {report.trim_p:g}",
    ]
    for kind in ("od", "wr", "tg", "tl"):
        lines.append(f"omega_{kind}              {report.omega[kind]:.3f}")
    for kind in ("base", "od", "wr", "tg", "tl"):
        lo, hi = report.ci[(kind, ci_level)]
        lines.append(
            f"{kind:<5} se {report.se[kind]:>10.2f}   "
            f"{100 * ci_level:.0f}% CI ({lo:.1f}, {hi:.1f})"
        )
    return lines


def cmd_fit(opts) -> int:
    region = read_region_json(opts.region_json)
    ids, centroids, sides, counts = read_plots_csv(opts.plot_csv)
    rect_plots = as_rect_plots(centroids, sides)
    try:
        require_plots_inside(region, rect_plots)
    except PlotabundError as exc:
        # report the offending plot by its CSV id
        raise InputError(f"{exc} (ids from {opts.plot_csv})") from exc

    est = AbundanceEstimator(
        knots_coarse=opts.knots_coarse,
        knots_fine=opts.knots_fine,
        knot_seed=opts.knot_seed,
        grid_points=opts.grid_points,
        trim_p=opts.trim_p,
        ci_levels=(0.90, opts.ci_level) if opts.ci_level != 0.90 else (0.90,),
    )
    est.fit(centroids, counts, region=region, sides=sides)
    report = est.report_

    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "inputs": {"plot_csv": str(opts.plot_csv), "region_json": str(opts.region_json)},
        "settings": {
            "knots_coarse": opts.knots_coarse,
            "knots_fine": opts.knots_fine,
            "knot_seed": opts.knot_seed,
            "grid_points": opts.grid_points,
            "trim_p": opts.trim_p,
        },
        "fit": {
            "status": est.fit_.status,
            "nll": est.fit_.nll,
            "nm_evals": est.fit_.nm_evals,
            "rho_coarse": est.fit_.rho.rho_coarse,
            "rho_fine": est.fit_.rho.rho_fine,
            "knots": est.fit_.knots.to_dict(seed=opts.knot_seed),
        },
        "report": report.to_dict(),
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)

    with open(out_dir / "surface.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "expected_count"])
        for x, y, val in surface_table(est.fit_, est.grid_):
            writer.writerow([f"{x:.10g}", f"{y:.10g}", f"{val:.10g}"])

    summary = _summary_lines(report, opts.ci_level)
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK


def _parse_knot_configs(values) -> tuple[tuple[int, int], ...]:
    configs = []
    for item in values:
        try:
            kc, kf = (int(v) for v in item.split(","))
        except ValueError as exc:
            raise InputError(f"--knots expects 'KC,KF', got {item!r}") from exc
        configs.append((kc, kf))
    return tuple(configs)


def _harness_row(label, result) -> dict:
    row = {
        "config": label,
        "bias": f"{result.bias:.3f}",
        "rmspe": f"{result.rmspe:.3f}",
        "fail_rate": f"{result.fail_rate:.3f}",
        "n_used": result.n_used,
    }
    for kind in ("base", "od", "wr", "tg", "tl"):
        row[f"ci90_{kind}"] = (
            f"{result.ci90[kind]:.3f}" if kind in result.ci90 else ""
        )
    return row


_HARNESS_FIELDS = ["config", "bias", "rmspe", "ci90_base", "ci90_od", "ci90_wr",
                   "ci90_tg", "ci90_tl", "fail_rate", "n_used"]


def _write_replicate_log(path, run) -> None:
    with open(path, "w") as fh:
        for config, result in run.by_config.items():
            label = f"kc{config[0]}_kf{config[1]}"
            for rec in result.replicates:
                entry = {
                    "config": label,
                    "index": rec["index"],
                    "true_total": rec["true_total"],
                    "failed": rec["failed"],
                    "reason": rec.get("reason", ""),
                }
                if not rec["failed"]:
                    entry["t_hat"] = rec["t_hat"]
                    entry["variances"] = rec["variances"]
                fh.write(json.dumps(entry) + "\n")


def cmd_simulate(opts) -> int:
    spec = ExperimentSpec(
        experiment=opts.experiment,
        replicates=opts.replicates,
        seed=opts.seed,
        knot_configs=_parse_knot_configs(opts.knots or ["3,8"]),
        trim_p=opts.trim_p,
        n_p_target=opts.grid_points,
    )
    run = run_harness(spec, workers=opts.workers)

    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_HARNESS_FIELDS)
        writer.writeheader()
        writer.writerow(_harness_row("srs", run.srs))
        for config, result in run.by_config.items():
            writer.writerow(_harness_row(f"kc{config[0]}_kf{config[1]}", result))
    _write_replicate_log(out_dir / "replicates.jsonl", run)
    print(f"experiment {opts.experiment}: {opts.replicates} replicates, "
          f"results in {out_dir / 'results.csv'}")
    return EXIT_OK


def cmd_sweep(opts) -> int:
    try:
        p_values = tuple(float(v) for v in opts.p_values.split(","))
    except ValueError as exc:
        raise InputError("--p-values expects comma-separated floats") from exc
    configs = _parse_knot_configs(opts.knots or ["5,16"])
    spec = ExperimentSpec(
        experiment=opts.experiment,
        replicates=opts.replicates,
        seed=opts.seed,
        knot_configs=configs[:1],
        trim_p=opts.trim_p,
        n_p_target=opts.grid_points,
    )
    results = trim_sweep(spec, p_values, workers=opts.workers)

    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "ci90_tg", "ci90_tl", "bias", "rmspe", "fail_rate"])
        for p in p_values:
            res = results[p]
            writer.writerow([
                f"{p:g}", f"{res.ci90['tg']:.3f}", f"{res.ci90['tl']:.3f}",
                f"{res.bias:.3f}", f"{res.rmspe:.3f}", f"{res.fail_rate:.3f}",
            ])
    print(f"sweep over p={list(p_values)} written to {out_dir / 'sweep.csv'}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Argument errors also go out as the machine-readable JSON line."""

    def error(self, message):
        _emit_error("input", message)
        self.exit(EXIT_INPUT)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="plotabund",
        description="Abundance estimation from plot counts via a basis-function intensity surface",
    )
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--knots-coarse", type=int, dest="knots_coarse")
        p.add_argument("--knots-fine", type=int, dest="knots_fine")
        p.add_argument("--knot-seed", type=int, dest="knot_seed")
        p.add_argument("--trim-p", type=float, dest="trim_p")
        p.add_argument("--grid-points", type=int, dest="grid_points")
        p.add_argument("--seed", type=int, dest="seed")
        p.add_argument("--out-dir", dest="out_dir", default=".")
        p.add_argument("--ci-level", type=float, dest="ci_level")

    fit_p = sub.add_parser("fit", help="fit a survey dataset")
    fit_p.add_argument("plot_csv")
    fit_p.add_argument("region_json")
    add_common(fit_p)
    fit_p.set_defaults(func=cmd_fit)

    sim_p = sub.add_parser("simulate", help="run a simulation experiment")
    sim_p.add_argument("--experiment", type=int, required=True, choices=(1, 2, 3, 4))
    sim_p.add_argument("--replicates", type=int, dest="replicates")
    sim_p.add_argument("--knots", action="append",
                       help="knot config as 'KC,KF'; repeatable")
    sim_p.add_argument("--workers", type=int, dest="workers")
    add_common(sim_p)
    sim_p.set_defaults(func=cmd_simulate)

    sweep_p = sub.add_parser("sweep", help="trim-proportion sweep")
    sweep_p.add_argument("--experiment", type=int, required=True, choices=(1, 2, 3, 4))
    sweep_p.add_argument("--replicates", type=int, dest="replicates")
    sweep_p.add_argument("--p-values", dest="p_values", default="0,0.25,0.5,0.75,0.9")
    sweep_p.add_argument("--knots", action="append",
                         help="knot config as 'KC,KF' (first one used)")
    sweep_p.add_argument("--workers", type=int, dest="workers")
    add_common(sweep_p)
    sweep_p.set_defaults(func=cmd_sweep)
    return parser


def _apply_config(opts) -> None:
    """flags > config file > defaults, detected via None flag defaults."""
    file_values = {}
    if opts.config:
        try:
            with open(opts.config) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{opts.config}: invalid JSON at line {exc.lineno}") from exc
    for key, default in _DEFAULTS.items():
        if getattr(opts, key, None) is None:
            setattr(opts, key, file_values.get(key, default))


def _emit_error(code: str, message: str) -> None:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    parser = _build_parser()
    opts = parser.parse_args(argv)
    try:
        _apply_config(opts)
        return opts.func(opts)
    except InputError as exc:
        _emit_error("input", str(exc))
        return EXIT_INPUT
    except PlotabundError as exc:
        _emit_error("fit", f"{type(exc).__name__}: {exc}")
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
