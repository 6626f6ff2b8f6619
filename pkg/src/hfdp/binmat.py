"""Fixed-margin binary matrices and the weighted rectangular loop sampler.

A matrix H with row sums r and column sums c is drawn with probability
proportional to prod_{ij} omega_ij^{h_ij}. Weights are always handled as
log-weights.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .errors import CapacityError, InvalidInputError

logger = logging.getLogger(__name__)

ENUMERATION_CELL_LIMIT = 30
MAX_LOG_ODDS = 700.0
UNIFORM_BLOCK = 65536


@dataclass
class MarginBinaryMatrix:
    """A 0/1 matrix together with the row and column sums it must keep."""

    entries: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray

    def __post_init__(self) -> None:
        self.entries = np.asarray(self.entries, dtype=np.int8)
        self.row_sums = np.asarray(self.row_sums, dtype=np.int64)
        self.col_sums = np.asarray(self.col_sums, dtype=np.int64)
        self.validate()

    @classmethod
    def from_entries(cls, entries: np.ndarray) -> "MarginBinaryMatrix":
        entries = np.asarray(entries, dtype=np.int8)
        return cls(entries=entries, row_sums=entries.sum(axis=1), col_sums=entries.sum(axis=0))

    @property
    def shape(self):
        return self.entries.shape

    def validate(self) -> None:
        """Raise InvalidInputError unless entries are binary and match both margins."""

        if self.entries.ndim != 2:
            raise InvalidInputError("entries must be a matrix")
        if not np.all((self.entries == 0) | (self.entries == 1)):
            raise InvalidInputError("entries must be 0 or 1")
        if self.row_sums.sum() != self.col_sums.sum():
            raise InvalidInputError("row and column margins have different totals")
        if not np.array_equal(self.entries.sum(axis=1), self.row_sums):
            raise InvalidInputError("row sums do not match the declared margins")
        if not np.array_equal(self.entries.sum(axis=0), self.col_sums):
            raise InvalidInputError("column sums do not match the declared margins")

    def key(self) -> bytes:
        """Hashable fingerprint of the entries (for frequency tables)."""
        return self.entries.tobytes() + repr(self.entries.shape).encode()

    def copy(self) -> "MarginBinaryMatrix":
        return MarginBinaryMatrix(self.entries.copy(), self.row_sums.copy(), self.col_sums.copy())


@dataclass
class WeightMatrix:
    """Strictly positive cell weights omega_ij, stored as log omega_ij."""

    log_weights: np.ndarray

    def __post_init__(self) -> None:
        self.log_weights = np.atleast_2d(np.asarray(self.log_weights, dtype=float))
        if not np.all(np.isfinite(self.log_weights)):
            raise InvalidInputError("log-weights must be finite (weights strictly positive)")

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "WeightMatrix":
        weights = np.asarray(weights, dtype=float)
        if np.any(weights <= 0):
            raise InvalidInputError("weights must be strictly positive")
        return cls(log_weights=np.log(weights))

    @classmethod
    def uniform(cls, shape) -> "WeightMatrix":
        return cls(log_weights=np.zeros(shape))


def is_checkerboard(sub: np.ndarray) -> bool:
    """True for the 2x2 identity and the 2x2 anti-identity."""

    sub = np.asarray(sub)
    if sub.shape != (2, 2):
        return False
    return bool(
        sub[0, 0] == sub[1, 1]
        and sub[0, 1] == sub[1, 0]
        and sub[0, 0] != sub[0, 1]
        and sub[0, 0] in (0, 1)
        and sub[0, 1] in (0, 1)
    )


def log_weight(H: MarginBinaryMatrix, W: WeightMatrix) -> float:
    """Unnormalized log P(H) = sum of log omega over the ones of H."""

    _check_shapes(H, W)
    return float(np.sum(W.log_weights[H.entries == 1]))


def log_relative_probability(H1: MarginBinaryMatrix, H2: MarginBinaryMatrix, W: WeightMatrix) -> float:
    """log P(H1) - log P(H2), summed over the cells where the two matrices differ."""

    if not (
        np.array_equal(H1.row_sums, H2.row_sums) and np.array_equal(H1.col_sums, H2.col_sums)
    ):
        raise InvalidInputError("matrices must share row and column margins")
    _check_shapes(H1, W)
    gained = (H1.entries == 1) & (H2.entries == 0)
    lost = (H1.entries == 0) & (H2.entries == 1)
    return float(np.sum(W.log_weights[gained]) - np.sum(W.log_weights[lost]))


def wrla_step(A: MarginBinaryMatrix, W: WeightMatrix, rng: np.random.Generator) -> MarginBinaryMatrix:
    """One weighted rectangular loop move; returns a new matrix."""

    return wrla_run(A, W, 1, rng)


def wrla_run(
    A0: MarginBinaryMatrix, W: WeightMatrix, T: int, rng: np.random.Generator
) -> MarginBinaryMatrix:
    """Compose T weighted rectangular loop moves starting from A0."""

    if T < 0:
        raise InvalidInputError("T must be nonnegative")
    _check_shapes(A0, W)
    if T == 0:
        return A0.copy()
    kernel = _LoopKernel(A0.entries, W.log_weights)
    kernel.run(T, rng)
    return MarginBinaryMatrix(kernel.entries(), A0.row_sums.copy(), A0.col_sums.copy())


def wrla_samples(
    A0: MarginBinaryMatrix,
    W: WeightMatrix,
    n_samples: int,
    thin: int,
    rng: np.random.Generator,
) -> Iterator[MarginBinaryMatrix]:
    """Yield the chain state every ``thin`` moves, ``n_samples`` times."""

    if thin < 1:
        raise InvalidInputError("thin must be >= 1")
    _check_shapes(A0, W)
    kernel = _LoopKernel(A0.entries, W.log_weights)
    for _ in range(n_samples):
        kernel.run(thin, rng)
        yield MarginBinaryMatrix(kernel.entries(), A0.row_sums.copy(), A0.col_sums.copy())


def enumerate_fixed_margin(
    row_sums: Sequence[int], col_sums: Sequence[int]
) -> List[MarginBinaryMatrix]:
    """Every 0/1 matrix with the given margins, by row-wise backtracking."""

    row_sums = [int(v) for v in row_sums]
    col_sums = [int(v) for v in col_sums]
    u, v = len(row_sums), len(col_sums)
    if u * v > ENUMERATION_CELL_LIMIT:
        raise CapacityError(f"enumeration is limited to {ENUMERATION_CELL_LIMIT} cells, got {u * v}")
    if sum(row_sums) != sum(col_sums):
        raise InvalidInputError("row and column margins have different totals")
    if any(s < 0 for s in row_sums + col_sums):
        raise InvalidInputError("margins must be nonnegative")

    found: List[MarginBinaryMatrix] = []
    rows: List[tuple] = []
    capacity = list(col_sums)

    def _extend(i: int) -> None:
        if i == u:
            if not any(capacity):
                entries = np.zeros((u, v), dtype=np.int8)
                for row, cols in enumerate(rows):
                    entries[row, list(cols)] = 1
                found.append(MarginBinaryMatrix(entries, row_sums, col_sums))
            return
        remaining_rows = u - i
        # A column can take at most one 1 per remaining row.
        if any(c > remaining_rows for c in capacity):
            return
        open_cols = [j for j in range(v) if capacity[j] > 0]
        for cols in itertools.combinations(open_cols, row_sums[i]):
            for j in cols:
                capacity[j] -= 1
            rows.append(cols)
            _extend(i + 1)
            rows.pop()
            for j in cols:
                capacity[j] += 1

    _extend(0)
    return found


def labels_to_matrix(labels: Sequence[int], K: int) -> MarginBinaryMatrix:
    """N x K membership matrix with one 1 per row."""

    labels = np.asarray(labels, dtype=np.int64)
    entries = np.zeros((labels.size, K), dtype=np.int8)
    entries[np.arange(labels.size), labels] = 1
    return MarginBinaryMatrix.from_entries(entries)


def matrix_to_labels(H: MarginBinaryMatrix) -> np.ndarray:
    """Inverse of labels_to_matrix; rows must hold exactly one 1."""

    if not np.all(H.row_sums == 1):
        raise InvalidInputError("every row of a membership matrix must hold exactly one 1")
    return np.argmax(H.entries, axis=1).astype(np.int64)


def _check_shapes(H: MarginBinaryMatrix, W: WeightMatrix) -> None:
    if H.entries.shape != W.log_weights.shape:
        raise InvalidInputError(
            f"matrix shape {H.entries.shape} differs from weight shape {W.log_weights.shape}"
        )


class _IndexSet:
    """Unordered set of ints with O(1) add, remove and uniform pick."""

    __slots__ = ("items", "where")

    def __init__(self, items) -> None:
        self.items = list(items)
        self.where = {item: pos for pos, item in enumerate(self.items)}

    def add(self, item: int) -> None:
        self.where[item] = len(self.items)
        self.items.append(item)

    def remove(self, item: int) -> None:
        pos = self.where.pop(item)
        last = self.items.pop()
        if last != item:
            self.items[pos] = last
            self.where[last] = pos

    def pick(self, u: float) -> Optional[int]:
        n = len(self.items)
        if n == 0:
            return None
        return self.items[min(int(u * n), n - 1)]


class _LoopKernel:
    """Incidence-list state for fast rectangular loop moves."""

    def __init__(self, entries: np.ndarray, log_weights: np.ndarray) -> None:
        self.n_rows, self.n_cols = entries.shape
        self.h = [[bool(x) for x in row] for row in entries.tolist()]
        self.logw = log_weights.tolist()
        self.row_zeros = [
            _IndexSet(j for j in range(self.n_cols) if not self.h[i][j]) for i in range(self.n_rows)
        ]
        self.col_ones = [
            _IndexSet(i for i in range(self.n_rows) if self.h[i][j]) for j in range(self.n_cols)
        ]
        self.accepted = 0
        self.proposed = 0

    def entries(self) -> np.ndarray:
        return np.array(self.h, dtype=np.int8).reshape(self.n_rows, self.n_cols)

    def run(self, T: int, rng: np.random.Generator) -> None:
        cells = self.n_rows * self.n_cols
        if cells == 0:
            return
        done = 0
        while done < T:
            block = rng.random((min(UNIFORM_BLOCK, T - done), 4)).tolist()
            for u_cell, u_first, u_second, u_accept in block:
                self._step(min(int(u_cell * cells), cells - 1), u_first, u_second, u_accept)
            done += len(block)

    def _step(self, cell: int, u_first: float, u_second: float, u_accept: float) -> None:
        h = self.h
        r1, c1 = divmod(cell, self.n_cols)
        if h[r1][c1]:
            c2 = self.row_zeros[r1].pick(u_first)
            if c2 is None:
                return
            r2 = self.col_ones[c2].pick(u_second)
            if r2 is None or h[r2][c1]:
                return
            # ones at (r1,c1),(r2,c2) move to (r1,c2),(r2,c1)
            off = ((r1, c1), (r2, c2))
            on = ((r1, c2), (r2, c1))
        else:
            r2 = self.col_ones[c1].pick(u_first)
            if r2 is None:
                return
            c2 = self.row_zeros[r2].pick(u_second)
            if c2 is None or not h[r1][c2]:
                return
            # ones at (r1,c2),(r2,c1) move to (r1,c1),(r2,c2)
            off = ((r1, c2), (r2, c1))
            on = ((r1, c1), (r2, c2))

        self.proposed += 1
        logw = self.logw
        delta = (
            logw[on[0][0]][on[0][1]]
            + logw[on[1][0]][on[1][1]]
            - logw[off[0][0]][off[0][1]]
            - logw[off[1][0]][off[1][1]]
        )
        delta = max(-MAX_LOG_ODDS, min(MAX_LOG_ODDS, delta))
        # Barker acceptance P(B) / (P(B) + P(A)).
        if u_accept >= 1.0 / (1.0 + math.exp(-delta)):
            return

        for i, j in off:
            h[i][j] = False
            self.row_zeros[i].add(j)
            self.col_ones[j].remove(i)
        for i, j in on:
            h[i][j] = True
            self.row_zeros[i].remove(j)
            self.col_ones[j].add(i)
        self.accepted += 1
