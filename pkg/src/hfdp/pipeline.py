"""High-level orchestration behind the CLI commands: fit, score, simulate, calibrate,
summarize and the label-flipping experiment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score

from .calibrate import calibration_grid, calibration_table, sym_kl_grid
from .config import GeneratorSpec, RunConfig, get_design, load_benchmarks
from .data_io import load_csv, load_trace, save_trace, write_assignment, write_dataset, write_json
from .dataset import LabeledDataset
from .errors import InvalidInputError
from .metrics import balance, contingency_table, expected_balance, fair_score, fairness_report, flip_labels
from .sampler import run_chains, run_gibbs, run_mcem
from .schema import FairnessReport, PosteriorSummary, json_float
from .simulate import SimulatedData, generate
from .summarize import summarize_trace

logger = logging.getLogger(__name__)


@dataclass
class FitOutcome:
    """What `fit` produced, besides the files it wrote."""

    mode: str
    result: dict
    summaries: List[PosteriorSummary] = field(default_factory=list)
    assignment: Optional[np.ndarray] = None


def prepare_data(run: RunConfig, rng: np.random.Generator) -> Tuple[LabeledDataset, Optional[SimulatedData]]:
    """Load the input file (optionally through a benchmark recipe) or generate the design."""

    if run.input_path is not None:
        features, attribute = run.feature_columns, run.attribute_column
        if run.benchmark is not None:
            recipes = load_benchmarks()
            if run.benchmark not in recipes:
                raise InvalidInputError(f"unknown benchmark {run.benchmark!r}; available: {sorted(recipes)}")
            recipe = recipes[run.benchmark]
            features, attribute = recipe.feature_columns, recipe.attribute_column
            logger.info("Using %s recipe (target balance %.2f)", recipe.name, recipe.target_balance)
        return load_csv(run.input_path, features, attribute, level_order=run.level_order), None
    simulated = generate(get_design(run.design), rng)
    return simulated.dataset, simulated


def fit(run: RunConfig) -> FitOutcome:
    """Fit the model, summarize it and write the result files into ``run.out_dir``."""

    run.validate()
    data_seed, chain_seed = np.random.SeedSequence(run.seed).spawn(2)
    dataset, simulated = prepare_data(run, np.random.default_rng(data_seed))
    config = replace(run.hfdp, seed=run.seed)
    beliefs = simulated.beliefs if simulated is not None else None

    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if simulated is not None:
        write_dataset(dataset, out / "dataset.csv")
        write_assignment(simulated.truth, out / "truth.csv")

    result = {
        "mode": run.mode,
        "seed": run.seed,
        "config": run.to_dict(),
        "levels": {name: a for a, name in enumerate(dataset.level_names)},
        "dataset": {"n": dataset.n, "d": dataset.d, "r": dataset.r, "sizes": dataset.sizes.tolist()},
    }

    if run.mode == "mcem":
        outcome = run_mcem(dataset, config, rng=np.random.default_rng(chain_seed), show_progress=run.show_progress)
        report = fairness_report(outcome.assignment, dataset, config.epsilon)
        result.update(
            {
                "modal_cluster_count": outcome.state.effective_cluster_count(),
                "iterations": outcome.iterations,
                "converged": outcome.converged,
                "log_marginal": [json_float(v) for v in outcome.log_marginal],
                "report": report.to_dict(),
            }
        )
        _add_truth_metrics(result, outcome.assignment, simulated)
        write_assignment(outcome.assignment, out / "mcem_assignment.csv")
        write_json(result, out / "result.json")
        return FitOutcome(mode=run.mode, result=result, assignment=outcome.assignment)

    if run.n_chains == 1:
        traces = [run_gibbs(dataset, config, rng=np.random.default_rng(chain_seed), beliefs=beliefs,
                            show_progress=run.show_progress)]
    else:
        traces = run_chains(dataset, config, run.n_chains, run.seed, beliefs=beliefs, workers=run.workers)

    summaries = []
    chains = []
    for i, trace in enumerate(traces):
        if len(trace) == 0:
            _raise_empty_trace()
        summary = summarize_trace(trace, dataset, config.epsilon)
        summaries.append(summary)
        suffix = "" if i == 0 else f"_{i}"
        save_trace(trace, out / f"trace{suffix}.npz", K=config.K, r=dataset.r)
        write_assignment(summary.dahl_assignment, out / f"dahl_assignment{suffix}.csv")
        if summary.map_assignment is not None:
            write_assignment(summary.map_assignment, out / f"map_assignment{suffix}.csv")
        chain = {
            "summary": summary.to_dict(),
            "diagnostics": _trace_diagnostics(trace),
        }
        if summary.map_assignment is not None:
            map_dataset = dataset if beliefs is None else dataset.with_labels(trace.attributes[summary.map_index])
            chain["map_report"] = fairness_report(summary.map_assignment, map_dataset, config.epsilon).to_dict()
        if beliefs is not None:
            chain["dahl_expected_balance"] = json_float(expected_balance(summary.dahl_assignment, beliefs)[1])
        _add_truth_metrics(chain, summary.dahl_assignment, simulated)
        chains.append(chain)

    result["chains"] = chains
    result["modal_cluster_count"] = summaries[0].modal_cluster_count
    write_json(result, out / "result.json")
    return FitOutcome(mode=run.mode, result=result, summaries=summaries, assignment=summaries[0].dahl_assignment)


def score(dataset: LabeledDataset, labels: np.ndarray, epsilon: float, max_clusters: Optional[int] = None) -> FairnessReport:
    return fairness_report(labels, dataset, epsilon, max_clusters=max_clusters)


def simulate(spec: GeneratorSpec, seed: int, out_dir: str | Path) -> SimulatedData:
    """Generate a design and write dataset.csv, truth.csv and simulation.json."""

    data_seed, _ = np.random.SeedSequence(seed).spawn(2)
    simulated = generate(spec, np.random.default_rng(data_seed))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(simulated.dataset, out / "dataset.csv")
    write_assignment(simulated.truth, out / "truth.csv")
    document = {
        "design": spec.name,
        "seed": seed,
        "sizes": simulated.dataset.sizes.tolist(),
        "levels": {name: a for a, name in enumerate(simulated.dataset.level_names)},
    }
    if simulated.true_levels is not None:
        write_assignment(simulated.true_levels, out / "true_levels.csv")
        document["p_acc"] = spec.p_acc
    write_json(document, out / "simulation.json")
    return simulated


def calibrate(
    g_values: Sequence[float],
    b_values: Sequence[float],
    K: int,
    r: int,
    n_draws: int,
    seed: int,
    N_values: Sequence[int],
    gamma_values: Sequence[float],
    out_dir: str | Path,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Write calibration.csv (prior balance and KL quantiles) and sym_kl.csv."""

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = calibration_table(calibration_grid(g_values, b_values, K, r, n_draws, seed))
    kl = sym_kl_grid(N_values, gamma_values)
    grid.to_csv(out / "calibration.csv", index=False, float_format="%.10g", lineterminator="\n")
    kl.to_csv(out / "sym_kl.csv", index=False, float_format="%.10g", lineterminator="\n")
    logger.info("Wrote %d calibration rows and %d sym-KL rows to %s", len(grid), len(kl), out)
    return grid, kl


def summarize(trace_path: str | Path, dataset: LabeledDataset, epsilon: float, out_dir: str | Path) -> PosteriorSummary:
    """Re-summarize a stored trace and write summary.json."""

    trace = load_trace(trace_path)
    if len(trace) == 0:
        _raise_empty_trace()
    summary = summarize_trace(trace, dataset, epsilon)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    document = {"summary": summary.to_dict(), "diagnostics": _trace_diagnostics(trace)}
    write_json(document, out / "summary.json")
    return summary


def flip_experiment(
    spec: GeneratorSpec,
    fractions: Sequence[float],
    replicates: int,
    epsilon: float,
    seed: int,
) -> pd.DataFrame:
    """Score the true clustering and label-flipped copies of it over fresh datasets.

    One row per (replicate, fraction) with the fair-score and the balance.
    """

    rows = []
    ordered = 0
    for replicate, stream in enumerate(np.random.SeedSequence(seed).spawn(replicates)):
        rng = np.random.default_rng(stream)
        simulated = generate(spec, rng)
        dataset, truth = simulated.dataset, simulated.truth
        K = int(truth.max()) + 1
        scores = []
        for fraction in fractions:
            labels = flip_labels(truth, fraction, max(K, 2), rng) if fraction > 0 else truth
            value = fair_score(labels, dataset, epsilon)
            _, overall = balance(contingency_table(labels, dataset.labels, int(labels.max()) + 1, dataset.r))
            rows.append({"replicate": replicate, "fraction": float(fraction), "fair_score": value, "balance": overall})
            scores.append(value)
        ordered += int(all(a > b for a, b in zip(scores, scores[1:])))
    logger.info("Fair-score strictly decreased with flipping in %d of %d replicates", ordered, replicates)
    return pd.DataFrame(rows, columns=["replicate", "fraction", "fair_score", "balance"])


def _raise_empty_trace() -> None:
    raise InvalidInputError("the chain stored no samples; lower --burnin or raise --iters")


def _trace_diagnostics(trace) -> dict:
    z_flags = np.array([d.z_accepted for d in trace.diagnostics], dtype=float)
    return {
        "n_samples": len(trace),
        "alpha_acceptance_rate": json_float(trace.alpha_acceptance_rate),
        "alpha_proposal_scale": json_float(trace.alpha_proposal_scale),
        "z_move_rate": json_float(z_flags.mean()) if z_flags.size else "nan",
        "mean_log_marginal": json_float(np.mean([d.log_marginal for d in trace.diagnostics])),
    }


def _add_truth_metrics(document: dict, labels: np.ndarray, simulated: Optional[SimulatedData]) -> None:
    if simulated is not None:
        document["ari_vs_truth"] = float(adjusted_rand_score(simulated.truth, labels))
