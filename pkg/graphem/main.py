# graphem/main.py
"""
Command-line entry point.

    python -m graphem generate --preset A --out data/A
    python -m graphem fit --preset A --method graphem --realizations 10 --jobs 4
    python -m graphem gamma-search --data data/A --gamma-grid 0,100,500
    python -m graphem bench --realizations 10 --em.tolerance 1e-4
    python -m graphem export-graph results/A_hat.csv --threshold 1e-10

Any `--section.field value` not declared below is applied as a dotted override
on top of the YAML config and the flags.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .bench_workflow import run_bench
from .cli_logger import CLIPrinter, setup_logging
from .config import ExperimentConfig, dump_manifest, load_config, parse_dotted_overrides, settings
from .errors import ConfigError, GraphemError
from .graph_export import write_dot
from .load_data import (
    load_dataset,
    read_dataset_spec,
    read_matrix,
    write_dataset,
    write_frame,
    write_matrix,
    write_states,
)
from .model import PRESETS, Dataset, make_dataset
from .report_aggregator import realization_frame, scores_frame
from .runner import RealizationOutcome, gamma_search, parallel_map, run_realization, tuned_gamma

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _gamma_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid gamma grid {text!r}: {e}") from e
    if not values:
        raise argparse.ArgumentTypeError("gamma grid must not be empty")
    return values


def _preset(text: str) -> str:
    key = text.upper()
    if key not in PRESETS:
        raise argparse.ArgumentTypeError(f"unknown preset {text!r}; expected one of {sorted(PRESETS)}")
    return key


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--preset", help="dataset preset (A, B, C, D); bench accepts a comma list")
    common.add_argument("--method", choices=["graphem", "mlem"])
    common.add_argument("--gamma", type=float)
    common.add_argument("--gamma-grid", type=_gamma_list, help="comma-separated gamma values")
    common.add_argument("--realizations", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--threshold", type=float)
    common.add_argument("--data", type=Path, help="directory written by `generate`")
    common.add_argument("--log-level", default=None)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--no-progress", action="store_true")

    parser = argparse.ArgumentParser(prog="graphem", description="Sparse transition-matrix estimation for linear-Gaussian state-space models")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate datasets and write them to disk")
    sub.add_parser("fit", parents=[common], help="fit GraphEM or MLEM per realization and score it")
    sub.add_parser("gamma-search", parents=[common], help="grid search of gamma by edge accuracy")
    sub.add_parser("bench", parents=[common], help="GraphEM vs MLEM table over datasets and realizations")
    export = sub.add_parser("export-graph", parents=[common], help="write a matrix CSV as a DOT graph")
    export.add_argument("matrix", type=Path, help="square matrix CSV (A_hat.csv or true_A.csv)")
    export.add_argument("-o", "--output", type=Path, help="DOT path (default: next to the matrix)")
    export.add_argument("--name", default="A")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {
        "method": args.method,
        "gamma": args.gamma,
        "gamma_grid": args.gamma_grid,
        "realizations": args.realizations,
        "seed": args.seed,
        "jobs": args.jobs,
        "out": str(args.out) if args.out is not None else None,
        "threshold": args.threshold,
        "data_dir": str(args.data) if args.data is not None else None,
    }
    if args.preset is not None:
        presets = [_preset(p) for p in args.preset.split(",") if p.strip()]
        if args.command == "bench":
            flags["datasets"] = presets
        else:
            if len(presets) != 1:
                raise ConfigError(f"{args.command} takes a single preset, got {args.preset!r}")
            flags["dataset.preset"] = presets[0]
    return flags


def resolve_config(args: argparse.Namespace, extra: List[str]) -> ExperimentConfig:
    try:
        return load_config(args.config, _flags(args), parse_dotted_overrides(extra))
    except argparse.ArgumentTypeError as e:
        raise ConfigError(str(e)) from e


def _realization_dir(out: Path, r: int, total: int) -> Path:
    return out if total == 1 else out / f"realization_{r:03d}"


def _primary_dataset(config: ExperimentConfig) -> Tuple[Dataset, int]:
    """The dataset a command tunes on: --data if given, else realization 0."""
    if config.data_dir is not None:
        return load_dataset(config.data_dir), read_dataset_spec(config.data_dir).seed
    spec = config.dataset_spec(0)
    return make_dataset(spec), spec.seed


# ==================== Commands ====================

def cmd_generate(config: ExperimentConfig, cli: CLIPrinter) -> int:
    out = Path(config.out)
    cli.section(f"Generating {config.realizations} dataset realization(s)...")
    for r in range(config.realizations):
        spec = config.dataset_spec(r)
        dataset = make_dataset(spec)
        target = _realization_dir(out, r, config.realizations)
        write_dataset(spec, dataset, target, extra={"command": "generate", "realization": r})
        cli.save(target)
    if config.realizations > 1:
        dump_manifest({"command": "generate", "config": config.to_manifest()}, out / "manifest.yaml")
    cli.done(f"Wrote {config.realizations} dataset(s) under {out}")
    return EXIT_OK


def _write_fit_outputs(outcome: RealizationOutcome, target: Path):
    write_matrix(outcome.fit.A_hat, target / "A_hat.csv")
    write_frame(outcome.fit.trace.to_frame(), target / "trace.csv")
    write_states(outcome.fit.smoother.smoothed_means, target / "smoothed_states.csv")


def cmd_fit(config: ExperimentConfig, cli: CLIPrinter, progress: bool = True) -> int:
    out = Path(config.out)
    method = config.method
    dataset0, seed0 = _primary_dataset(config)
    name = (read_dataset_spec(config.data_dir).name if config.data_dir else config.dataset.preset) or "custom"
    manifest: Dict[str, Any] = {"command": "fit", "config": config.to_manifest()}

    gamma = float(config.gamma or 0.0)
    search = tuned_gamma(config, dataset0, method, progress=progress)
    if search is not None:
        cli.section("No gamma given, tuning it on realization 0...")
        gamma = search.best_gamma
        write_frame(search.table.assign(gamma_max=search.gamma_max), out / "gamma_search.csv")
        manifest.update(gamma_grid=search.grid, gamma_max=search.gamma_max)
        cli.success(f"gamma = {gamma:.6g}")
    manifest["gamma"] = gamma

    cli.section(f"Fitting {method} ({name})...")
    if config.data_dir is not None:
        outcomes = [run_realization(config, dataset0, method, gamma, 0, seed0)]
        total = 1
    else:
        total = config.realizations

        def one(r: int) -> RealizationOutcome:
            if r == 0:
                return run_realization(config, dataset0, method, gamma, 0, seed0)
            spec = config.dataset_spec(r)
            try:
                dataset = make_dataset(spec)
            except GraphemError as e:
                return RealizationOutcome(realization=r, seed=spec.seed, method=method, gamma=gamma, error=str(e))
            return run_realization(config, dataset, method, gamma, r, spec.seed)

        outcomes = parallel_map(one, range(total), config.jobs, desc=method, progress=progress)

    for outcome in outcomes:
        if outcome.ok:
            _write_fit_outputs(outcome, _realization_dir(out, outcome.realization, total))
        else:
            cli.error(f"Realization {outcome.realization}: {outcome.error}")

    scores = scores_frame(realization_frame(outcomes, name))
    write_frame(scores, out / "scores.csv")
    manifest["errors"] = [o.error for o in outcomes if not o.ok]
    dump_manifest(manifest, out / "manifest.yaml")
    cli.save(out / "scores.csv")
    cli.table(scores[["realization", "rmse", "accuracy", "precision", "recall", "specificity", "f1"]], title=f"{method} scores")

    failed = sum(not o.ok for o in outcomes)
    if failed == len(outcomes):
        cli.error("Every realization failed")
        return EXIT_FAILURE
    cli.done(f"{len(outcomes) - failed} of {len(outcomes)} realization(s) fitted")
    return EXIT_OK


def cmd_gamma_search(config: ExperimentConfig, cli: CLIPrinter, progress: bool = True) -> int:
    out = Path(config.out)
    dataset, _ = _primary_dataset(config)
    cli.section("Searching gamma...")
    result = gamma_search(config, dataset, progress=progress)
    table = result.table.assign(gamma_max=result.gamma_max, selected=result.table["gamma"] == result.best_gamma)
    write_frame(table, out / "gamma_search.csv")
    dump_manifest(
        {"command": "gamma-search", "config": config.to_manifest(), "grid": result.grid,
         "gamma_max": result.gamma_max, "best_gamma": result.best_gamma},
        out / "manifest.yaml",
    )
    cli.table(table[["gamma", "accuracy", "f1", "rmse", "nonzeros"]], title=f"gamma_max = {result.gamma_max:.6g}")
    cli.save(out / "gamma_search.csv")
    cli.done(f"Best gamma = {result.best_gamma:.6g}")
    return EXIT_OK


def cmd_bench(config: ExperimentConfig, cli: CLIPrinter, progress: bool = True) -> int:
    state = run_bench(config, cli, progress)
    realizations = state["realizations"]
    if realizations.empty or (realizations["error"] != "").all():
        cli.error("Every benchmark fit failed")
        return EXIT_FAILURE
    if state["errors"]:
        cli.warn(f"{len(state['errors'])} error(s) recorded in manifest.yaml")
    cli.done("Benchmark completed")
    return EXIT_OK


def cmd_export_graph(matrix: Path, output: Optional[Path], threshold: float, name: str, cli: CLIPrinter) -> int:
    if not Path(matrix).exists():
        cli.error(f"Matrix file not found: {matrix}")
        return EXIT_FAILURE
    output = output or Path(matrix).with_suffix(".dot")
    graph = write_dot(read_matrix(matrix), output, threshold, name)
    cli.save(output)
    cli.done(f"{graph.number_of_nodes()} nodes, {graph.number_of_edges()} edges")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    setup_logging(args.log_level or settings.log_level)
    cli = CLIPrinter(quiet=args.quiet)
    progress = not (args.no_progress or args.quiet)

    try:
        config = resolve_config(args, extra)
        if args.command == "generate":
            return cmd_generate(config, cli)
        if args.command == "fit":
            return cmd_fit(config, cli, progress)
        if args.command == "gamma-search":
            return cmd_gamma_search(config, cli, progress)
        if args.command == "bench":
            return cmd_bench(config, cli, progress)
        return cmd_export_graph(args.matrix, args.output, config.threshold, args.name, cli)
    except ConfigError as e:
        cli.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except GraphemError as e:
        cli.error(str(e))
        logger.debug("command failed", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
