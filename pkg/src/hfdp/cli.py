"""Command-line entry point: fit, score, simulate, calibrate, summarize and experiments."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import RunConfig, get_design, load_run_config
from .data_io import load_csv, read_assignment, write_json
from .errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, HfdpError, UsageError
from .pipeline import calibrate, fit, flip_experiment, score, simulate, summarize

logger = logging.getLogger(__name__)

HFDP_FLAGS = {
    "iters": "iterations",
    "burnin": "burn_in",
    "thin": "thin",
    "K": "K",
    "g": "g",
    "b": "b",
    "epsilon": "epsilon",
    "wrla_steps": "wrla_steps",
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports bad usage as UsageError instead of exiting with status 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; command-line flags override it")
    common.add_argument("--seed", type=int, help="Seed for every random draw of the command")
    common.add_argument("--out", help="Output directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log per-sweep diagnostics")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="Comma separated dataset with a header row")
    data.add_argument("--features", help="Comma separated feature column names (default: all but the attribute)")
    data.add_argument("--attribute", help="Name of the protected attribute column (default: attribute)")
    data.add_argument(
        "--levels",
        help="Comma separated attribute values in level order (e.g. the order in simulation.json); "
        "default: order of first appearance",
    )

    parser = _Parser(description="Bayesian fair clustering with the hierarchical fair Dirichlet process.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit_cmd = commands.add_parser("fit", parents=[common, data], help="Run the sampler or MC-EM and summarize")
    fit_cmd.add_argument("--design", help="Simulation design to generate instead of reading --input")
    fit_cmd.add_argument("--benchmark", help="Benchmark recipe that fixes the feature and attribute columns")
    fit_cmd.add_argument("--mode", choices=["gibbs", "mcem"])
    fit_cmd.add_argument("--iters", type=int)
    fit_cmd.add_argument("--burnin", type=int)
    fit_cmd.add_argument("--thin", type=int)
    fit_cmd.add_argument("--K", type=int)
    fit_cmd.add_argument("--g", type=float)
    fit_cmd.add_argument("--b", type=float)
    fit_cmd.add_argument("--epsilon", type=float)
    fit_cmd.add_argument("--wrla-steps", type=int)
    fit_cmd.add_argument("--chains", type=int, help="Independent chains (reported separately)")
    fit_cmd.add_argument("--workers", type=int, help="Processes used for independent chains")
    fit_cmd.add_argument("--strict", action="store_true", help="Metropolis-correct the label move")
    fit_cmd.add_argument("--progress", action="store_true", help="Show a progress bar")

    score_cmd = commands.add_parser("score", parents=[common, data], help="Fair-score an external assignment")
    score_cmd.add_argument("--assignment", required=True, help="File with columns row,cluster")
    score_cmd.add_argument("--epsilon", type=float, default=0.05)
    score_cmd.add_argument("--K", type=int, help="Largest number of cluster labels allowed")

    simulate_cmd = commands.add_parser("simulate", parents=[common], help="Generate a simulation design")
    simulate_cmd.add_argument("--design", required=True)
    simulate_cmd.add_argument("--p-acc", type=float, help="Override the level retention probability")

    calibrate_cmd = commands.add_parser("calibrate", parents=[common], help="Prior calibration tables")
    calibrate_cmd.add_argument("--g-values", default="1,10,100")
    calibrate_cmd.add_argument("--b-values", default="0.1,1,10")
    calibrate_cmd.add_argument("--K", type=int, default=2)
    calibrate_cmd.add_argument("--r", type=int, default=2)
    calibrate_cmd.add_argument("--draws", type=int, default=10_000)
    calibrate_cmd.add_argument("--N-values", default="20,50,100,200")
    calibrate_cmd.add_argument("--gamma-values", default="0.5,1,2,5,10")

    summarize_cmd = commands.add_parser("summarize", parents=[common, data], help="Re-summarize a stored trace")
    summarize_cmd.add_argument("--trace", required=True, help="trace.npz written by fit")
    summarize_cmd.add_argument("--epsilon", type=float, default=0.05)

    experiment = commands.add_parser("experiment", help="Validation experiments")
    studies = experiment.add_subparsers(dest="study", required=True, parser_class=_Parser)
    flip_cmd = studies.add_parser("flip", parents=[common], help="Fair-score of the truth against flipped labels")
    flip_cmd.add_argument("--design", default="E1")
    flip_cmd.add_argument("--fractions", default="0,0.05,0.10")
    flip_cmd.add_argument("--replicates", type=int, default=100)
    flip_cmd.add_argument("--epsilon", type=float, default=0.05)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit status."""

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
        logger.error("%s", exc)
        return EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")

    handlers = {
        "fit": _cmd_fit,
        "score": _cmd_score,
        "simulate": _cmd_simulate,
        "calibrate": _cmd_calibrate,
        "summarize": _cmd_summarize,
        "experiment": _cmd_flip,
    }
    try:
        handlers[args.command](args)
    except HfdpError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the --config file (if any) with the command-line flags."""

    data = load_run_config(args.config) if args.config else {}
    hfdp_values = dict(data.get("hfdp") or {})
    for flag, key in HFDP_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            hfdp_values[key] = value
    if getattr(args, "strict", False):
        hfdp_values["strict_z_move"] = True
    design = getattr(args, "design", None) or data.get("design")
    if design and "K" not in hfdp_values:
        fit_K = get_design(design).fit_K
        if fit_K is not None:
            hfdp_values["K"] = fit_K
    data["hfdp"] = hfdp_values

    overrides = {
        "seed": args.seed,
        "mode": getattr(args, "mode", None),
        "input_path": args.input,
        "design": getattr(args, "design", None),
        "benchmark": getattr(args, "benchmark", None),
        "feature_columns": _split(args.features, str) if args.features else None,
        "attribute_column": args.attribute,
        "level_order": _level_list(args),
        "out_dir": args.out,
        "n_chains": getattr(args, "chains", None),
        "workers": getattr(args, "workers", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "progress", False):
        data["show_progress"] = True
    if data.get("seed") is None:
        raise UsageError("--seed is required (or a seed in --config)")
    return RunConfig.from_dict(data)


def _cmd_fit(args: argparse.Namespace) -> None:
    run = build_run_config(args)
    outcome = fit(run)
    logger.info("Modal cluster count %s; results in %s", outcome.result["modal_cluster_count"], run.out_dir)


def _cmd_score(args: argparse.Namespace) -> None:
    if not args.input:
        raise UsageError("score needs --input")
    dataset = load_csv(args.input, _feature_list(args), args.attribute or "attribute", _level_list(args))
    labels = read_assignment(args.assignment, n=dataset.n)
    report = score(dataset, labels, args.epsilon, max_clusters=args.K)
    document = report.to_dict()
    print(json.dumps(document, indent=2))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(document, Path(args.out) / "score.json")


def _cmd_simulate(args: argparse.Namespace) -> None:
    seed = _require_seed(args)
    spec = get_design(args.design)
    if args.p_acc is not None:
        spec = spec.with_overrides(p_acc=args.p_acc)
    simulated = simulate(spec, seed, args.out or "out")
    logger.info("Simulated %s: N=%d", spec.name, simulated.dataset.n)


def _cmd_calibrate(args: argparse.Namespace) -> None:
    calibrate(
        g_values=_split(args.g_values, float),
        b_values=_split(args.b_values, float),
        K=args.K,
        r=args.r,
        n_draws=args.draws,
        seed=_require_seed(args),
        N_values=_split(args.N_values, int),
        gamma_values=_split(args.gamma_values, float),
        out_dir=args.out or "out",
    )


def _cmd_summarize(args: argparse.Namespace) -> None:
    if not args.input:
        raise UsageError("summarize needs --input (the dataset the trace was fitted on)")
    dataset = load_csv(args.input, _feature_list(args), args.attribute or "attribute", _level_list(args))
    summary = summarize(args.trace, dataset, args.epsilon, args.out or "out")
    logger.info("Dahl sample %d, modal cluster count %d", summary.dahl_index, summary.modal_cluster_count)


def _cmd_flip(args: argparse.Namespace) -> None:
    seed = _require_seed(args)
    frame = flip_experiment(
        get_design(args.design),
        _split(args.fractions, float),
        args.replicates,
        args.epsilon,
        seed,
    )
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "flip.csv", index=False, float_format="%.10g", lineterminator="\n")
    logger.info("Wrote %d rows to %s", len(frame), out / "flip.csv")


def _require_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    if args.config:
        seed = load_run_config(args.config).get("seed")
        if seed is not None:
            return int(seed)
    raise UsageError("--seed is required")


def _feature_list(args: argparse.Namespace) -> Optional[List[str]]:
    return _split(args.features, str) if args.features else None


def _level_list(args: argparse.Namespace) -> Optional[List[str]]:
    return _split(args.levels, str) if getattr(args, "levels", None) else None


def _split(text: str, kind) -> list:
    try:
        return [kind(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise UsageError(f"could not parse list {text!r}") from exc


if __name__ == "__main__":
    sys.exit(main())
