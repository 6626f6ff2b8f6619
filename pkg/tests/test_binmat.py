from collections import Counter

import numpy as np
import pytest

from hfdp.binmat import (
    MarginBinaryMatrix,
    WeightMatrix,
    enumerate_fixed_margin,
    is_checkerboard,
    labels_to_matrix,
    log_relative_probability,
    log_weight,
    matrix_to_labels,
    wrla_run,
    wrla_samples,
    wrla_step,
)
from hfdp.errors import CapacityError, InvalidInputError

IDENTITY = MarginBinaryMatrix.from_entries(np.eye(2, dtype=np.int8))


def _frequencies(samples) -> dict:
    counts = Counter(sample.key() for sample in samples)
    total = sum(counts.values())
    return {key: n / total for key, n in counts.items()}


def _exact_law(row_sums, col_sums, W: WeightMatrix) -> dict:
    matrices = enumerate_fixed_margin(row_sums, col_sums)
    logs = np.array([log_weight(H, W) for H in matrices])
    probs = np.exp(logs - logs.max())
    probs /= probs.sum()
    return {H.key(): p for H, p in zip(matrices, probs)}


def test_checkerboard_examples() -> None:
    assert is_checkerboard(np.array([[1, 0], [0, 1]]))
    assert is_checkerboard(np.array([[0, 1], [1, 0]]))
    assert not is_checkerboard(np.array([[1, 1], [0, 0]]))
    assert not is_checkerboard(np.array([[1, 0, 0], [0, 1, 0]]))


def test_enumeration_counts() -> None:
    assert len(enumerate_fixed_margin([1, 1], [1, 1])) == 2
    assert len(enumerate_fixed_margin([1, 1, 1], [1, 1, 1])) == 6
    assert len(enumerate_fixed_margin([2, 1], [1, 1, 1])) == 3
    assert enumerate_fixed_margin([2, 0], [2, 0]) == []


def test_enumeration_keeps_margins_and_has_no_duplicates() -> None:
    matrices = enumerate_fixed_margin([2, 1, 1], [1, 2, 1])
    keys = {H.key() for H in matrices}
    assert len(keys) == len(matrices)
    for H in matrices:
        assert H.entries.sum(axis=1).tolist() == [2, 1, 1]
        assert H.entries.sum(axis=0).tolist() == [1, 2, 1]


def test_enumeration_size_guard() -> None:
    with pytest.raises(CapacityError):
        enumerate_fixed_margin([1] * 6, [1] * 6)
    with pytest.raises(InvalidInputError):
        enumerate_fixed_margin([1, 1], [1, 0])


def test_log_relative_probability() -> None:
    W = WeightMatrix.from_weights(np.array([[2.0, 1.0], [1.0, 2.0]]))
    anti = MarginBinaryMatrix.from_entries(np.array([[0, 1], [1, 0]]))
    assert log_relative_probability(IDENTITY, IDENTITY, W) == 0.0
    assert log_relative_probability(IDENTITY, anti, W) == pytest.approx(np.log(4.0))
    other = MarginBinaryMatrix.from_entries(np.array([[1, 1], [0, 0]]))
    with pytest.raises(InvalidInputError):
        log_relative_probability(IDENTITY, other, W)


def test_weights_must_be_positive() -> None:
    with pytest.raises(InvalidInputError):
        WeightMatrix.from_weights(np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_zero_steps_return_the_start() -> None:
    rng = np.random.default_rng(0)
    W = WeightMatrix.uniform((2, 2))
    result = wrla_run(IDENTITY, W, 0, rng)
    assert np.array_equal(result.entries, IDENTITY.entries)
    assert result is not IDENTITY


def test_moves_keep_the_margins() -> None:
    rng = np.random.default_rng(1)
    start = enumerate_fixed_margin([2, 1, 1, 2], [3, 2, 1])[0]
    W = WeightMatrix(log_weights=rng.normal(size=(4, 3)))
    H = start
    for _ in range(50):
        H = wrla_step(H, W, rng)
        assert H.entries.sum(axis=1).tolist() == [2, 1, 1, 2]
        assert H.entries.sum(axis=0).tolist() == [3, 2, 1]


def test_uniform_weights_visit_both_two_by_two_matrices_equally() -> None:
    rng = np.random.default_rng(2)
    freqs = _frequencies(wrla_samples(IDENTITY, WeightMatrix.uniform((2, 2)), 20000, 1, rng))
    assert freqs[IDENTITY.key()] == pytest.approx(0.5, abs=0.015)


def test_weighted_two_by_two_stationary_law() -> None:
    rng = np.random.default_rng(3)
    W = WeightMatrix.from_weights(np.array([[2.0, 1.0], [1.0, 2.0]]))
    freqs = _frequencies(wrla_samples(IDENTITY, W, 20000, 1, rng))
    assert freqs[IDENTITY.key()] == pytest.approx(0.8, abs=0.015)


def test_loop_sampler_matches_the_enumerated_law() -> None:
    rng = np.random.default_rng(4)
    row_sums, col_sums = [2, 1, 1], [1, 2, 1]
    W = WeightMatrix(log_weights=rng.normal(scale=0.7, size=(3, 3)))
    exact = _exact_law(row_sums, col_sums, W)
    start = enumerate_fixed_margin(row_sums, col_sums)[0]
    freqs = _frequencies(wrla_samples(start, W, 30000, 3, rng))
    total_variation = 0.5 * sum(abs(freqs.get(key, 0.0) - p) for key, p in exact.items())
    assert total_variation < 0.03


def test_membership_matrix_round_trip() -> None:
    labels = np.array([2, 0, 1, 1, 2])
    H = labels_to_matrix(labels, 4)
    assert H.col_sums.tolist() == [1, 2, 2, 0]
    assert matrix_to_labels(H).tolist() == labels.tolist()


SMALL_PATTERNS = [
    ([1, 1], [1, 1]),
    ([2, 1], [1, 1, 1]),
    ([1, 1, 1], [2, 1]),
    ([2, 1, 1], [1, 2, 1]),
    ([1, 1, 1], [1, 1, 1]),
    ([1, 1, 1, 1], [2, 2]),
]


def _total_variation(freqs: dict, exact: dict) -> float:
    keys = set(freqs) | set(exact)
    return 0.5 * sum(abs(freqs.get(key, 0.0) - exact.get(key, 0.0)) for key in keys)


def _checkerboard_swap_frequencies(start: MarginBinaryMatrix, n_samples: int, thin: int, rng) -> dict:
    """Classical sampler: swap a uniformly chosen 2 x 2 submatrix whenever it is a checkerboard."""

    entries = start.entries.copy()
    n_rows, n_cols = entries.shape
    counts = Counter()
    for _ in range(n_samples):
        for _ in range(thin):
            rows = rng.choice(n_rows, size=2, replace=False)
            cols = rng.choice(n_cols, size=2, replace=False)
            sub = entries[np.ix_(rows, cols)]
            if is_checkerboard(sub):
                entries[np.ix_(rows, cols)] = 1 - sub
        counts[MarginBinaryMatrix.from_entries(entries).key()] += 1
    return {key: n / n_samples for key, n in counts.items()}


@pytest.mark.parametrize("row_sums,col_sums", SMALL_PATTERNS)
def test_loop_sampler_visits_every_matrix(row_sums, col_sums) -> None:
    rng = np.random.default_rng(5)
    matrices = enumerate_fixed_margin(row_sums, col_sums)
    assert 2 <= len(matrices) <= 10
    W = WeightMatrix(log_weights=rng.normal(scale=0.7, size=(len(row_sums), len(col_sums))))
    visited = {H.key() for H in wrla_samples(matrices[0], W, 10000, 10, rng)}
    assert visited == {H.key() for H in matrices}


@pytest.mark.slow
@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("row_sums,col_sums", SMALL_PATTERNS)
def test_loop_sampler_law_on_small_margin_patterns(row_sums, col_sums, weighted) -> None:
    rng = np.random.default_rng(6)
    shape = (len(row_sums), len(col_sums))
    W = WeightMatrix(log_weights=rng.normal(scale=0.7, size=shape)) if weighted else WeightMatrix.uniform(shape)
    exact = _exact_law(row_sums, col_sums, W)
    start = enumerate_fixed_margin(row_sums, col_sums)[-1]
    freqs = _frequencies(wrla_samples(start, W, 100000, 10, rng))
    assert _total_variation(freqs, exact) < 0.03


@pytest.mark.slow
def test_loop_sampler_flows_are_balanced_between_pairs() -> None:
    rng = np.random.default_rng(7)
    W = WeightMatrix(log_weights=rng.normal(scale=0.7, size=(3, 3)))
    start = enumerate_fixed_margin([1, 1, 1], [1, 1, 1])[0]
    flows = Counter()
    previous = start.key()
    for H in wrla_samples(start, W, 1000000, 1, rng):
        current = H.key()
        if current != previous:
            flows[(previous, current)] += 1
        previous = current
    assert flows
    for (source, target), forward in flows.items():
        backward = flows.get((target, source), 0)
        assert abs(forward - backward) <= 3.0 * np.sqrt(forward + backward)


@pytest.mark.parametrize("row_sums,col_sums", [([1, 1, 1], [1, 1, 1]), ([1, 1, 1, 1], [2, 2])])
def test_uniform_loop_sampler_agrees_with_checkerboard_swaps(row_sums, col_sums) -> None:
    rng = np.random.default_rng(8)
    shape = (len(row_sums), len(col_sums))
    start = enumerate_fixed_margin(row_sums, col_sums)[0]
    loop = _frequencies(wrla_samples(start, WeightMatrix.uniform(shape), 20000, 5, rng))
    classical = _checkerboard_swap_frequencies(start, 20000, 5, rng)
    assert _total_variation(loop, classical) < 0.03
