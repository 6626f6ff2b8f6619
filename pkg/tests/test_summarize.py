import math

import numpy as np
import pytest

from hfdp.dataset import LabeledDataset
from hfdp.schema import ChainState, ChainTrace, SweepDiagnostics
from hfdp.summarize import (
    association_matrix,
    cluster_count_posterior,
    dahl_index,
    dahl_least_squares,
    map_by_fair_score,
    pairwise_probability,
    summarize_trace,
)

# Levels 0,0,0,1,1,1 on six distinct points of the line.
DATASET = LabeledDataset(
    points=np.array([[0.0], [0.4], [5.0], [0.2], [0.5], [5.3]]),
    labels=np.array([0, 0, 0, 1, 1, 1]),
    r=2,
)
BALANCED = np.array([0, 0, 1, 0, 0, 1])
SEGREGATED = np.array([0, 0, 0, 1, 1, 1])


def _trace(assignments, levels=None) -> ChainTrace:
    """Wrap full assignments into a trace; states carry one level unless levels are given."""

    trace = ChainTrace()
    for i, labels in enumerate(assignments):
        labels = np.asarray(labels, dtype=np.int64)
        attributes = np.zeros(labels.size, dtype=np.int64) if levels is None else levels
        r = int(attributes.max()) + 1
        K = int(labels.max()) + 1
        z = [labels[attributes == a] for a in range(r)]
        m = np.vstack([np.bincount(z_a, minlength=K) for z_a in z])
        state = ChainState(alpha0=1.0, beta=np.full(K, 1.0 / K), w=np.full((r, K), 1.0 / K), m=m, z=z)
        trace.append(state, labels, attributes, SweepDiagnostics(i, True, (True,) * r, 0.0))
    return trace


def test_association_matrix() -> None:
    eta = association_matrix(np.array([0, 0, 1]))
    assert eta.tolist() == [[1, 1, 0], [1, 1, 0], [0, 0, 1]]


def test_pairwise_probability_of_two_partitions() -> None:
    # {12|3} and {13|2}
    probs = pairwise_probability(_trace([[0, 0, 1], [0, 1, 0]]))
    assert probs[0, 1] == pytest.approx(0.5)
    assert probs[0, 2] == pytest.approx(0.5)
    assert probs[1, 2] == 0.0
    assert np.allclose(np.diag(probs), 1.0)


def test_pairwise_probability_ignores_label_names() -> None:
    first = pairwise_probability(_trace([[0, 0, 1, 2], [1, 1, 0, 0]]))
    second = pairwise_probability(_trace([[2, 2, 0, 1], [0, 0, 1, 1]]))
    assert np.array_equal(first, second)


def test_dahl_picks_the_most_central_sample_and_the_earliest_on_ties() -> None:
    assert dahl_index(_trace([[0, 0, 1], [0, 1, 0]])) == 0
    trace = _trace([[0, 1, 1], [0, 0, 1], [0, 0, 1], [0, 0, 0]])
    assert dahl_index(trace) == 1
    assert dahl_least_squares(trace) is trace.states[1]


def test_cluster_count_posterior() -> None:
    posterior = cluster_count_posterior(_trace([[0, 0, 1], [0, 1, 1], [0, 1, 2]]))
    assert posterior == {2: pytest.approx(2 / 3), 3: pytest.approx(1 / 3)}


def test_map_skips_samples_outside_the_balanced_set() -> None:
    trace = _trace([SEGREGATED, BALANCED], levels=DATASET.labels)
    choice = map_by_fair_score(trace, DATASET, 0.05)
    assert choice.feasible
    assert choice.index == 1
    assert math.isfinite(choice.score)


def test_map_reports_when_nothing_is_feasible() -> None:
    trace = _trace([SEGREGATED], levels=DATASET.labels)
    choice = map_by_fair_score(trace, DATASET, 0.05)
    assert not choice.feasible
    assert choice.index is None
    assert choice.score == -math.inf


def test_summary_of_a_trace() -> None:
    trace = _trace([BALANCED, SEGREGATED, BALANCED], levels=DATASET.labels)
    summary = summarize_trace(trace, DATASET, 0.05)
    assert summary.dahl_index == 0
    assert summary.dahl_assignment.tolist() == BALANCED.tolist()
    assert summary.map_index == 0
    assert summary.modal_cluster_count == 2
    assert summary.dahl_report.epsilon_ok
    document = summary.to_dict()
    assert document["cluster_count_posterior"] == {"2": pytest.approx(1.0)}
