"""Read and write datasets, assignment files, result documents and trace archives."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .dataset import LabeledDataset
from .errors import DataFormatError
from .schema import ChainState, ChainTrace, SweepDiagnostics

logger = logging.getLogger(__name__)

MAX_LEVELS = 20
FLOAT_FORMAT = "%.17g"
ASSIGNMENT_COLUMNS = ("row", "cluster")


def load_csv(
    path: str | Path,
    feature_columns: Optional[Sequence[str]] = None,
    attribute_column: str = "attribute",
    level_order: Optional[Sequence[str]] = None,
) -> LabeledDataset:
    """Load a comma separated file with a header row.

    Features default to every column except the attribute column. Attribute
    levels are numbered in order of first appearance, or by their position in
    ``level_order`` when one is given; the original values are kept as
    ``level_names``.
    """

    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError(f"{path} is empty") from exc
    except pd.errors.ParserError as exc:
        raise DataFormatError(f"could not parse {path}: {exc}") from exc

    if frame.empty:
        raise DataFormatError(f"{path} has a header but no rows")
    if attribute_column not in frame.columns:
        raise DataFormatError(f"attribute column {attribute_column!r} not found in {path}", line=1)
    if feature_columns is None:
        feature_columns = [c for c in frame.columns if c != attribute_column]
    missing = [c for c in feature_columns if c not in frame.columns]
    if missing:
        raise DataFormatError(f"feature columns {missing} not found in {path}", line=1)
    if not feature_columns:
        raise DataFormatError(f"{path} has no feature columns", line=1)

    points = np.empty((len(frame), len(feature_columns)))
    for j, column in enumerate(feature_columns):
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float)))
        if bad.size:
            # Line 1 is the header.
            line = int(bad[0]) + 2
            raise DataFormatError(
                f"column {column!r} holds a non-numeric value {frame[column].iloc[bad[0]]!r}", line=line
            )
        points[:, j] = values.to_numpy(dtype=float)

    raw_levels = frame[attribute_column].astype(str).str.strip()
    if (raw_levels == "").any():
        line = int(np.flatnonzero((raw_levels == "").to_numpy())[0]) + 2
        raise DataFormatError("empty attribute value", line=line)
    if level_order is None:
        codes, names = pd.factorize(raw_levels, sort=False)
    else:
        codes, names = _codes_in_order(raw_levels, level_order)
    if len(names) < 2:
        raise DataFormatError(f"attribute column {attribute_column!r} has a single level")
    if len(names) > MAX_LEVELS:
        raise DataFormatError(f"attribute column has {len(names)} levels, at most {MAX_LEVELS} are supported")

    dataset = LabeledDataset(
        points=points,
        labels=codes.astype(np.int64),
        r=len(names),
        level_names=[str(n) for n in names],
        feature_names=[str(c) for c in feature_columns],
    )
    logger.info("Loaded %d rows, %d features, %d levels from %s", dataset.n, dataset.d, dataset.r, path)
    return dataset


def write_dataset(dataset: LabeledDataset, path: str | Path, attribute_column: str = "attribute") -> None:
    """Write features with 17 significant digits so that load_csv gives back the same values."""

    frame = pd.DataFrame(dataset.points, columns=dataset.feature_names)
    frame[attribute_column] = [dataset.level_names[a] for a in dataset.labels]
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %d rows to %s", dataset.n, path)


def write_assignment(labels: Sequence[int], path: str | Path) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    frame = pd.DataFrame({"row": np.arange(labels.size), "cluster": labels})
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("Wrote assignment of %d rows to %s", labels.size, path)


def read_assignment(path: str | Path, n: Optional[int] = None) -> np.ndarray:
    """Read a (row, cluster) file; rows may come in any order but must cover 0..N-1 once."""

    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError(f"{path} is empty") from exc
    if list(frame.columns[:2]) != list(ASSIGNMENT_COLUMNS):
        raise DataFormatError(f"assignment files need the header 'row,cluster', got {list(frame.columns)}", line=1)
    if frame.empty:
        raise DataFormatError(f"{path} has a header but no rows")

    numbers = {}
    for column in ASSIGNMENT_COLUMNS:
        values = pd.to_numeric(frame[column], errors="coerce")
        invalid = values.isna().to_numpy() | (values.to_numpy(dtype=float) % 1 != 0) | (values.to_numpy(dtype=float) < 0)
        if invalid.any():
            line = int(np.flatnonzero(invalid)[0]) + 2
            raise DataFormatError(f"{column} must be a nonnegative integer", line=line)
        numbers[column] = values.to_numpy(dtype=np.int64)

    rows = numbers["row"]
    expected = rows.size if n is None else n
    if rows.size != expected or not np.array_equal(np.sort(rows), np.arange(expected)):
        raise DataFormatError(f"assignment rows must be exactly 0..{expected - 1}")
    labels = np.empty(expected, dtype=np.int64)
    labels[rows] = numbers["cluster"]
    return labels


def write_json(document: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path} is not valid JSON", line=exc.lineno) from exc


def save_trace(trace: ChainTrace, path: str | Path, K: int, r: int) -> None:
    """Store every sample of a trace in one numpy archive."""

    S = len(trace)
    n = trace.assignments[0].size if S else 0
    np.savez_compressed(
        path,
        shape=np.array([K, r, n], dtype=np.int64),
        alpha0=np.array([s.alpha0 for s in trace.states], dtype=float),
        beta=np.array([s.beta for s in trace.states], dtype=float).reshape(S, K),
        w=np.array([s.w for s in trace.states], dtype=float).reshape(S, r, K),
        m=np.array([s.m for s in trace.states], dtype=np.int64).reshape(S, r, K),
        assignments=np.array(trace.assignments, dtype=np.int64).reshape(S, n),
        attributes=np.array(trace.attributes, dtype=np.int64).reshape(S, n),
        iteration=np.array([d.iteration for d in trace.diagnostics], dtype=np.int64),
        alpha_accepted=np.array([d.alpha_accepted for d in trace.diagnostics], dtype=bool),
        z_accepted=np.array([d.z_accepted for d in trace.diagnostics], dtype=bool).reshape(S, r),
        log_marginal=np.array([d.log_marginal for d in trace.diagnostics], dtype=float),
        alpha_acceptance_rate=np.array(trace.alpha_acceptance_rate),
        alpha_proposal_scale=np.array(trace.alpha_proposal_scale),
        seed=np.array(-1 if trace.seed is None else trace.seed, dtype=np.int64),
    )
    logger.info("Wrote trace with %d samples to %s", S, path)


def load_trace(path: str | Path) -> ChainTrace:
    """Rebuild a ChainTrace written by save_trace; per-level labels follow dataset row order."""

    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"could not read trace archive {path}") from exc
    with archive:
        K, r, n = (int(v) for v in archive["shape"])
        seed = int(archive["seed"])
        trace = ChainTrace(
            alpha_acceptance_rate=float(archive["alpha_acceptance_rate"]),
            alpha_proposal_scale=float(archive["alpha_proposal_scale"]),
            seed=None if seed < 0 else seed,
        )
        for i in range(archive["alpha0"].shape[0]):
            assignment = archive["assignments"][i]
            attributes = archive["attributes"][i]
            state = ChainState(
                alpha0=float(archive["alpha0"][i]),
                beta=archive["beta"][i].copy(),
                w=archive["w"][i].copy(),
                m=archive["m"][i].copy(),
                z=_split_by_level(assignment, attributes, r),
            )
            diagnostics = SweepDiagnostics(
                iteration=int(archive["iteration"][i]),
                alpha_accepted=bool(archive["alpha_accepted"][i]),
                z_accepted=tuple(bool(v) for v in archive["z_accepted"][i]),
                log_marginal=float(archive["log_marginal"][i]),
            )
            trace.append(state, assignment, attributes, diagnostics)
    logger.info("Loaded trace with %d samples from %s", len(trace), path)
    return trace


def _split_by_level(assignment: np.ndarray, attributes: np.ndarray, r: int) -> List[np.ndarray]:
    return [assignment[attributes == a].astype(np.int64) for a in range(r)]


def level_order_from(document: dict) -> List[str]:
    """Level names sorted by index from the ``levels`` mapping of simulation.json or result.json."""

    levels = document.get("levels")
    if not isinstance(levels, dict) or not levels:
        raise DataFormatError("the document has no 'levels' mapping")
    ordered = sorted(levels.items(), key=lambda item: item[1])
    if [index for _, index in ordered] != list(range(len(ordered))):
        raise DataFormatError(f"level indices must be 0..{len(ordered) - 1}, got {sorted(levels.values())}")
    return [str(name) for name, _ in ordered]


def _codes_in_order(raw_levels: pd.Series, level_order: Sequence[str]):
    names = pd.Index([str(name).strip() for name in level_order])
    if names.has_duplicates:
        raise DataFormatError(f"level order {list(names)} names a level twice")
    codes = names.get_indexer(raw_levels)
    unknown = np.flatnonzero(codes < 0)
    if unknown.size:
        raise DataFormatError(
            f"attribute value {raw_levels.iloc[unknown[0]]!r} is not in the level order {list(names)}",
            line=int(unknown[0]) + 2,
        )
    present = set(raw_levels)
    absent = [name for name in names if name not in present]
    if absent:
        raise DataFormatError(f"levels {absent} of the level order never occur")
    return codes, names
