"""Exact constrained binary optimal transport: assign N points to K clusters with fixed sizes.

The problem is the min-cost flow source -> clusters (capacity m_k) ->
points (capacity 1) -> sink. It is solved by successive shortest augmenting
paths: points enter one at a time in index order and each augmenting path
may push already assigned points from one cluster to another. Shortest
paths run Bellman-Ford on the K cluster nodes, where the arc k -> k' costs
the cheapest move of a current member of k into k'. The residual graph has
no negative cycle after every augmentation, so each optimum stays exact and
integral.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from .binmat import MarginBinaryMatrix, labels_to_matrix
from .errors import CapacityError, InvalidInputError, InternalConsistencyError

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_ROWS = 8
BRUTE_FORCE_MAX_COLS = 3
RELAX_TOL = 1e-12


@dataclass
class TransportProblem:
    """argmin <B, L> over N x K binary B with unit row sums and column sums m."""

    cost: np.ndarray
    col_sums: np.ndarray

    def __post_init__(self) -> None:
        self.cost = np.atleast_2d(np.asarray(self.cost, dtype=float))
        self.col_sums = np.asarray(self.col_sums, dtype=np.int64)
        self.validate()

    @property
    def row_sums(self) -> np.ndarray:
        return np.ones(self.cost.shape[0], dtype=np.int64)

    def validate(self) -> None:
        n, K = self.cost.shape
        if self.col_sums.shape != (K,):
            raise InvalidInputError(f"expected {K} column sums, got {self.col_sums.shape}")
        if np.any(self.col_sums < 0):
            raise InvalidInputError("column sums must be nonnegative")
        if int(self.col_sums.sum()) != n:
            raise InvalidInputError(
                f"column sums total {int(self.col_sums.sum())} but there are {n} rows"
            )
        if not np.all(np.isfinite(self.cost)):
            raise InvalidInputError("costs must be finite")

    def total_cost(self, labels: np.ndarray) -> float:
        return float(self.cost[np.arange(labels.size), labels].sum())


def solve_binary_ot(problem: TransportProblem) -> MarginBinaryMatrix:
    """Exact minimum-cost binary transport plan (N x K membership matrix)."""

    return labels_to_matrix(solve_assignment(problem), problem.cost.shape[1])


def solve_assignment(problem: TransportProblem) -> np.ndarray:
    """Same optimum as solve_binary_ot, returned as a label vector."""

    # Row-minimum shift keeps every entering arc nonnegative; argmin is unchanged.
    cost = problem.cost - problem.cost.min(axis=1, keepdims=True)
    n, K = cost.shape
    capacity = problem.col_sums
    labels = np.full(n, -1, dtype=np.int64)
    load = np.zeros(K, dtype=np.int64)

    for i in range(n):
        dist, parent_col, parent_row = _shortest_paths(cost, labels[:i], cost[i], K)
        open_dist = np.where(load < capacity, dist, np.inf)
        target = int(np.argmin(open_dist))
        if not np.isfinite(open_dist[target]):
            raise InternalConsistencyError("no cluster with spare capacity is reachable")

        column = target
        for _ in range(K):
            previous = parent_col[column]
            if previous < 0:
                break
            labels[parent_row[column]] = column
            column = previous
        else:
            raise InternalConsistencyError("augmenting path did not terminate")
        labels[i] = column
        load[target] += 1
    return labels


def brute_force_ot(problem: TransportProblem) -> Tuple[float, np.ndarray]:
    """Optimal cost and the first optimal labels by exhaustive search (small problems only)."""

    n, K = problem.cost.shape
    if n > BRUTE_FORCE_MAX_ROWS or K > BRUTE_FORCE_MAX_COLS:
        raise CapacityError(
            f"brute force is limited to {BRUTE_FORCE_MAX_ROWS} rows and "
            f"{BRUTE_FORCE_MAX_COLS} columns, got {n}x{K}"
        )
    best_cost = np.inf
    best_labels = None
    for labels in _label_vectors(n, [int(c) for c in problem.col_sums]):
        total = problem.total_cost(labels)
        if total < best_cost:
            best_cost, best_labels = total, labels
    return float(best_cost), best_labels


def _shortest_paths(
    cost: np.ndarray, assigned: np.ndarray, entry: np.ndarray, K: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bellman-Ford over cluster nodes for a new row entering with costs ``entry``.

    parent_col[k] = -1 means the new row goes straight into k; otherwise the
    member parent_row[k] of cluster parent_col[k] is moved into k.
    """

    swap = np.full((K, K), np.inf)
    swap_row = np.full((K, K), -1, dtype=np.int64)
    if assigned.size:
        current = cost[np.arange(assigned.size), assigned]
        moves = cost[: assigned.size] - current[:, None]
        for k in range(K):
            members = np.flatnonzero(assigned == k)
            if members.size == 0:
                continue
            block = moves[members]
            best = np.argmin(block, axis=0)
            swap[k] = block[best, np.arange(K)]
            swap_row[k] = members[best]
        np.fill_diagonal(swap, np.inf)

    dist = entry.astype(float).copy()
    parent_col = np.full(K, -1, dtype=np.int64)
    parent_row = np.full(K, -1, dtype=np.int64)
    for _ in range(K - 1):
        candidate = dist[:, None] + swap
        source = np.argmin(candidate, axis=0)
        best = candidate[source, np.arange(K)]
        improve = best < dist - RELAX_TOL * (1.0 + np.abs(dist))
        if not np.any(improve):
            break
        cols = np.flatnonzero(improve)
        dist[cols] = best[cols]
        parent_col[cols] = source[cols]
        parent_row[cols] = swap_row[source[cols], cols]
    return dist, parent_col, parent_row


def _label_vectors(n: int, sizes: List[int]) -> Iterator[np.ndarray]:
    """All label vectors with the given occupancy, in lexicographic order of column choices."""

    def _fill(free: Tuple[int, ...], k: int, labels: np.ndarray) -> Iterator[np.ndarray]:
        if k == len(sizes) - 1:
            labels = labels.copy()
            labels[list(free)] = k
            yield labels
            return
        for rows in itertools.combinations(free, sizes[k]):
            chosen = set(rows)
            labels[list(rows)] = k
            yield from _fill(tuple(i for i in free if i not in chosen), k + 1, labels)

    yield from _fill(tuple(range(n)), 0, np.full(n, -1, dtype=np.int64))
