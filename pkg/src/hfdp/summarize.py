"""Posterior summaries of a chain: co-clustering probabilities, Dahl's least-squares pick,
the fair-score MAP and the distribution of the number of clusters."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional

import numpy as np

from .dataset import LabeledDataset
from .errors import InvalidInputError
from .metrics import fair_score, fairness_report
from .schema import ChainState, ChainTrace, PosteriorSummary

logger = logging.getLogger(__name__)


@dataclass
class MapChoice:
    """The stored sample with the highest fair-score; index is None when none is feasible."""

    index: Optional[int]
    state: Optional[ChainState]
    score: float

    @property
    def feasible(self) -> bool:
        return self.index is not None


def association_matrix(labels: np.ndarray) -> np.ndarray:
    """eta_ij = 1 when observations i and j share a cluster."""

    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


def pairwise_probability(trace: ChainTrace) -> np.ndarray:
    """Average association matrix over the stored samples (running sum)."""

    _require_samples(trace)
    total = np.zeros((trace.assignments[0].size,) * 2)
    for labels in trace.assignments:
        total += association_matrix(labels)
    return total / len(trace.assignments)


def dahl_index(trace: ChainTrace) -> int:
    """Index of the sample minimising sum_ij (eta_ij(s) - mean eta_ij)^2; earliest on ties."""

    mean = pairwise_probability(trace)
    losses = np.array([np.sum((association_matrix(z) - mean) ** 2) for z in trace.assignments])
    return int(np.argmin(losses))


def dahl_least_squares(trace: ChainTrace) -> ChainState:
    return trace.states[dahl_index(trace)]


def map_by_fair_score(trace: ChainTrace, dataset: LabeledDataset, epsilon: float) -> MapChoice:
    """Stored sample with the largest finite fair-score, scoring each sample against the
    attribute levels it was drawn with."""

    _require_samples(trace)
    best = MapChoice(index=None, state=None, score=float("-inf"))
    for i, labels in enumerate(trace.assignments):
        score = fair_score(labels, _sample_dataset(trace, dataset, i), epsilon)
        if np.isfinite(score) and score > best.score:
            best = MapChoice(index=i, state=trace.states[i], score=score)
    if not best.feasible:
        logger.warning("No stored sample lies in the epsilon-balanced set (epsilon=%g)", epsilon)
    return best


def cluster_count_posterior(trace: ChainTrace) -> Dict[int, float]:
    """Relative frequency of the effective cluster count across stored samples."""

    _require_samples(trace)
    counts = Counter(state.effective_cluster_count() for state in trace.states)
    total = sum(counts.values())
    return {k: float(Fraction(n, total)) for k, n in sorted(counts.items())}


def summarize_trace(trace: ChainTrace, dataset: LabeledDataset, epsilon: float) -> PosteriorSummary:
    """Dahl and MAP configurations, the cluster-count posterior and the Dahl fairness report."""

    chosen = dahl_index(trace)
    best = map_by_fair_score(trace, dataset, epsilon)
    posterior = cluster_count_posterior(trace)
    modal = max(posterior, key=lambda k: (posterior[k], -k))
    report = fairness_report(trace.assignments[chosen], _sample_dataset(trace, dataset, chosen), epsilon)
    logger.info(
        "Dahl sample %d uses %d clusters; modal cluster count %d",
        chosen, trace.states[chosen].effective_cluster_count(), modal,
    )
    return PosteriorSummary(
        dahl_index=chosen,
        dahl_assignment=trace.assignments[chosen].copy(),
        map_index=best.index,
        map_assignment=None if best.index is None else trace.assignments[best.index].copy(),
        map_score=best.score,
        cluster_count_posterior=posterior,
        modal_cluster_count=int(modal),
        dahl_report=report,
    )


def _sample_dataset(trace: ChainTrace, dataset: LabeledDataset, i: int) -> LabeledDataset:
    if i < len(trace.attributes) and not np.array_equal(trace.attributes[i], dataset.labels):
        return dataset.with_labels(trace.attributes[i])
    return dataset


def _require_samples(trace: ChainTrace) -> None:
    if len(trace.assignments) == 0:
        raise InvalidInputError("the trace holds no samples")
