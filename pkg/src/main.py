"""
crashlens command line.

Subcommands: validate, metrics, moran, features, train-agg, train-point,
predict, synth. Exit codes: 0 success, 1 data error, 2 usage error.

Output directory layout:
    report.json                 every command
    tract_metrics.csv           metrics, features
    moran.geojson, moran.csv    moran
    aggregated.csv, point.csv, temporal_profile.csv   features
    model_<name>.json           train-agg, train-point
    roc_<model>.csv, roc_<model>.svg                  train-point
    predictions.csv             predict
"""

import sys
import json
import logging
import argparse
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import ConfigError, RunConfig, config_help, load_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Settings that never change results stay out of report.json
UNECHOED_KEYS = {"threads"}


class UsageError(Exception):
    """Bad invocation detected after argument parsing."""


def configure_logging(verbosity: int) -> None:
    level = logging.INFO
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if getattr(cfg.paths, k) is None]
    if missing:
        raise UsageError("; ".join(f"missing input path: --{k} (or paths.{k})" for k in missing))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(command: str, cfg: RunConfig, **sections: Any) -> Dict[str, Any]:
    config = {key: value for key, value in cfg.flat().items() if key not in UNECHOED_KEYS}
    return {"command": command, "config": config, **sections}


def _load_tracts(cfg: RunConfig):
    from src.ingest.tracts import parse_tracts
    return parse_tracts(cfg.paths.tracts, id_property=cfg.paths.tract_id_property)


def _load_accidents(cfg: RunConfig):
    from src.ingest.accidents import parse_accidents
    return parse_accidents(cfg.paths.accidents, strict=cfg.ingest.strict)


def _load_network(cfg: RunConfig):
    from src.ingest.network import parse_network
    return parse_network(cfg.paths.nodes, cfg.paths.edges, strict=cfg.ingest.strict)


def _summaries(cfg: RunConfig, network, tracts):
    from src.network.metrics import summarize_tracts
    return summarize_tracts(
        network, tracts,
        directed_degree=cfg.network.directed_degree,
        length_weighted=cfg.network.length_weighted,
        n_jobs=cfg.threads,
    )


def cmd_validate(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Parse every given input and report row accounting."""
    reports = {}
    tract_count = None
    if cfg.paths.accidents:
        _, report = _load_accidents(cfg)
        reports["accidents"] = report.model_dump()
    if cfg.paths.nodes or cfg.paths.edges:
        _require(cfg, "nodes", "edges")
        _, report = _load_network(cfg)
        reports["network"] = report.model_dump()
    if cfg.paths.tracts:
        tract_count = len(_load_tracts(cfg))
    if not reports and tract_count is None:
        raise UsageError("validate needs at least one of --accidents, --tracts, --nodes/--edges")

    from src.pipeline.reports import write_report
    write_report(_report("validate", cfg, ingest=reports, tracts=tract_count), _out_dir(cfg))
    for name, report in reports.items():
        logger.info(f"{name}: {report['rows_ok']}/{report['rows_read']} rows accepted")
    return EXIT_OK


def cmd_metrics(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Per-tract network summaries as CSV."""
    _require(cfg, "tracts", "nodes", "edges")
    from src.network.metrics import write_summaries
    from src.pipeline.reports import write_report

    tracts = _load_tracts(cfg)
    network, net_report = _load_network(cfg)
    summaries, coverage = _summaries(cfg, network, tracts)
    out = _out_dir(cfg)
    write_summaries(summaries, out / "tract_metrics.csv")
    write_report(_report("metrics", cfg, ingest={"network": net_report}, coverage=coverage), out)
    return EXIT_OK


def cmd_moran(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Local Moran's I of per-tract severe (or all) accident counts."""
    _require(cfg, "tracts", "accidents")
    from src.features.labels import severity_label
    from src.features.tables import assign_to_tracts
    from src.pipeline.reports import write_report
    from src.spatial.moran import moran_permutation, write_moran_outputs
    from src.spatial.weights import queen_contiguity

    tracts = _load_tracts(cfg)
    accidents, acc_report = _load_accidents(cfg)
    assigned = assign_to_tracts(accidents, tracts)
    if cfg.moran.target == "severe":
        weights = np.array([severity_label(a) for a in accidents], dtype=float)
    else:
        weights = np.ones(len(accidents))
    inside = assigned >= 0
    y = np.bincount(assigned[inside], weights=weights[inside], minlength=len(tracts))

    w = queen_contiguity(tracts, snap_tol=cfg.moran.snap_tol_m)
    result = moran_permutation(
        y, w, n_perm=cfg.moran.n_perm, seed=cfg.seed, alpha=cfg.moran.alpha,
        variant=cfg.moran.variant, n_jobs=cfg.threads,
    )
    out = _out_dir(cfg)
    write_moran_outputs(result, tracts, y, out)
    counts = {c.value: sum(1 for x in result.cluster if x == c) for c in set(result.cluster)}
    write_report(_report(
        "moran", cfg,
        ingest={"accidents": acc_report},
        moran={
            "units": len(tracts),
            "islands": len(w.islands),
            "mean_neighbours": float(w.cardinalities.mean()),
            "significant_fraction": result.significant_fraction,
            "clusters": dict(sorted(counts.items())),
            "accidents_outside_tracts": int(np.sum(~inside)),
        },
    ), out)
    return EXIT_OK


def _build_tables(cfg: RunConfig):
    from src.features.tables import build_aggregated, build_point
    tracts = _load_tracts(cfg)
    accidents, acc_report = _load_accidents(cfg)
    network, net_report = _load_network(cfg)
    summaries, coverage = _summaries(cfg, network, tracts)
    aggregated, agg_cov = build_aggregated(accidents, tracts, summaries)
    point, point_cov = build_point(accidents, tracts, summaries)
    info = {
        "ingest": {"accidents": acc_report, "network": net_report},
        "network_coverage": coverage,
        "aggregated_coverage": agg_cov,
        "point_coverage": point_cov,
    }
    return accidents, summaries, aggregated, point, info


def cmd_features(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Both model-ready tables plus tract metrics and the temporal profile."""
    _require(cfg, "tracts", "accidents", "nodes", "edges")
    from src.features.tables import temporal_profile, write_table
    from src.network.metrics import write_summaries
    from src.pipeline.reports import fingerprint, write_report

    accidents, summaries, aggregated, point, info = _build_tables(cfg)
    out = _out_dir(cfg)
    write_summaries(summaries, out / "tract_metrics.csv")
    write_table(aggregated, out / "aggregated.csv")
    write_table(point, out / "point.csv")
    write_table(temporal_profile(accidents), out / "temporal_profile.csv")
    write_report(_report(
        "features", cfg, **info,
        datasets={"aggregated": fingerprint(aggregated, "y"), "point": fingerprint(point, "label")},
    ), out)
    return EXIT_OK


def _table_or_build(cfg: RunConfig, args: argparse.Namespace, kind: str):
    """Read --table when given, otherwise build the table from raw inputs."""
    from src.features.tables import AGGREGATED_COLUMNS, POINT_COLUMNS, read_table
    if args.table:
        required = AGGREGATED_COLUMNS if kind == "aggregated" else POINT_COLUMNS
        try:
            return read_table(args.table, required), None, {}
        except ValueError as e:
            raise ValueError(f"{args.table}: {e}")
    _require(cfg, "tracts", "accidents", "nodes", "edges")
    accidents, _, aggregated, point, info = _build_tables(cfg)
    return (aggregated if kind == "aggregated" else point), accidents, info


def cmd_train_aggregated(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Two-stage aggregated model: CV report plus model file."""
    from src.pipeline.aggregated import run_aggregated
    from src.pipeline.persistence import save_model
    from src.pipeline.reports import fingerprint, write_report

    table, _, info = _table_or_build(cfg, args, "aggregated")
    fit = run_aggregated(table, cfg)
    out = _out_dir(cfg)
    save_model(fit, out / "model_aggregated.json")
    write_report(_report(
        "train-agg", cfg, **info,
        dataset=fingerprint(table, "y"),
        aggregated=fit.to_report(),
    ), out)
    return EXIT_OK


def cmd_train_point(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Four-classifier comparison: report, ROC files and the boosted model."""
    from src.features.tables import temporal_profile, write_table
    from src.metrics.roc_export import write_roc_csv, write_roc_svg
    from src.pipeline.persistence import save_model
    from src.pipeline.point import POINT_MODELS, run_point
    from src.pipeline.reports import fingerprint, write_report

    table, accidents, info = _table_or_build(cfg, args, "point")
    models = args.models or list(POINT_MODELS)
    report = run_point(table, cfg, models=models)
    out = _out_dir(cfg)
    for r in report.results:
        write_roc_csv(r.roc_curve, out / f"roc_{r.name}.csv")
        write_roc_svg(r.roc_curve, out / f"roc_{r.name}.svg", title=r.name, auc=r.auc)
    if report.final_model is not None:
        save_model(report, out / f"model_{report.final_name}.json")
    if accidents is not None:
        write_table(temporal_profile(accidents), out / "temporal_profile.csv")
    write_report(_report(
        "train-point", cfg, **info,
        dataset=fingerprint(table, "label"),
        point=report.to_report(),
    ), out)
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Score a feature CSV with a saved model."""
    from src.features.tables import TABLE_DTYPES
    from src.pipeline.persistence import load_model

    bundle = load_model(args.model)
    frame = pd.read_csv(args.table, dtype=TABLE_DTYPES)
    missing = bundle.missing_columns(frame)
    if missing:
        raise UsageError(f"{args.table}: missing column {missing[0]!r} required by model '{bundle.name}'")

    out_path = Path(args.output) if args.output else _out_dir(cfg) / "predictions.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    result = pd.DataFrame({"prediction": bundle.predict(frame)})
    for key in ("tract_id", "accident_id"):
        if key in frame.columns:
            result.insert(0, key, frame[key])
    result.to_csv(out_path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(result)} predictions to {out_path}")
    return EXIT_OK


def _load_spec(path: Optional[str], seed: Optional[int]):
    from src.pipeline.synthetic import SyntheticSpec
    data: Dict[str, Any] = {}
    if path:
        raw = Path(path).read_bytes()
        try:
            data = tomllib.loads(raw.decode("utf-8")) if path.endswith(".toml") else json.loads(raw)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise UsageError(f"cannot parse synthetic spec {path}: {e}")
    if seed is not None:
        data["seed"] = seed
    try:
        return SyntheticSpec(**data)
    except ValueError as e:
        raise UsageError(f"invalid synthetic spec: {e}")


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Write a seeded synthetic city and model-ready tables."""
    from src.pipeline.reports import write_report
    from src.pipeline.synthetic import save_synthetic

    spec = _load_spec(args.spec, args.seed)
    out = _out_dir(cfg)
    paths = save_synthetic(spec, out)
    write_report(_report(
        "synth", cfg,
        synthetic=spec.model_dump(),
        files={name: path.name for name, path in sorted(paths.items())},
    ), out)
    return EXIT_OK


COMMANDS = {
    "validate": (cmd_validate, "Parse inputs and report accepted/rejected rows"),
    "metrics": (cmd_metrics, "Compute per-tract street-network summaries"),
    "moran": (cmd_moran, "Local Moran's I cluster map of accident counts"),
    "features": (cmd_features, "Build the aggregated and point tables"),
    "train-agg": (cmd_train_aggregated, "Cross-validate and fit the two-stage tract model"),
    "train-point": (cmd_train_point, "Compare the four point classifiers"),
    "predict": (cmd_predict, "Score a feature CSV with a saved model"),
    "synth": (cmd_synth, "Generate a synthetic dataset"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crashlens",
        description="Geospatial accident-severity modelling toolkit",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config key (repeatable)")
    common.add_argument("--seed", type=int, help="Master seed (seed)")
    common.add_argument("--threads", type=int, help="Worker cap (threads)")
    common.add_argument("--out", help="Output directory (paths.out)")
    common.add_argument("--accidents", help="Accident CSV (paths.accidents)")
    common.add_argument("--tracts", help="Tract GeoJSON (paths.tracts)")
    common.add_argument("--nodes", help="Street node CSV (paths.nodes)")
    common.add_argument("--edges", help="Street edge CSV (paths.edges)")
    common.add_argument("--strict", action="store_true", default=None, help="Fail on the first bad row")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="count", default=0)

    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(
            name, parents=[common], help=help_text, description=help_text,
            epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        if name == "moran":
            sub.add_argument("--n-perm", type=int, help="Permutations per unit (moran.n_perm)")
            sub.add_argument("--alpha", type=float, help="Significance level (moran.alpha)")
        if name in ("train-agg", "train-point", "predict"):
            sub.add_argument("--table", required=(name == "predict"), help="Feature table CSV")
        if name == "train-point":
            sub.add_argument("--models", nargs="+", help="Subset of gbm_smote gbm rf logreg")
        if name == "predict":
            sub.add_argument("--model", required=True, help="Model file written by a train command")
            sub.add_argument("--output", help="Prediction CSV (default <out>/predictions.csv)")
        if name == "synth":
            sub.add_argument("--spec", help="Synthetic spec (JSON or .toml)")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {
        "seed": args.seed,
        "threads": args.threads,
        "paths.out": args.out,
        "paths.accidents": args.accidents,
        "paths.tracts": args.tracts,
        "paths.nodes": args.nodes,
        "paths.edges": args.edges,
        "ingest.strict": args.strict,
    }
    if getattr(args, "n_perm", None) is not None:
        flags["moran.n_perm"] = args.n_perm
    if getattr(args, "alpha", None) is not None:
        flags["moran.alpha"] = args.alpha
    return flags


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    configure_logging(args.verbose - args.quiet)
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.overrides, _flags(args))
        logger.info(f"Starting crashlens {args.command}")
        return handler(cfg, args)
    except ConfigError as e:
        for problem in e.problems:
            print(f"crashlens: config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as e:
        print(f"crashlens: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"crashlens: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
