"""Data models describing observations tagged with a protected attribute."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidInputError

SIMPLEX_TOL = 1e-10


@dataclass
class LabeledDataset:
    """N observations in R^d, each carrying a protected-attribute level in 0..r-1.

    Levels and cluster labels are 0-based everywhere in the package; the
    original level names (as read from a file) are kept in ``level_names``.
    """

    points: np.ndarray
    labels: np.ndarray
    r: int
    level_names: List[str] = field(default_factory=list)
    feature_names: List[str] = field(default_factory=list)
    per_attribute_index: List[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.level_names:
            self.level_names = [str(a) for a in range(self.r)]
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.points.shape[1])]
        self.validate()
        self.per_attribute_index = [np.flatnonzero(self.labels == a) for a in range(self.r)]

    @property
    def n(self) -> int:
        """Total number of observations."""
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        """Feature dimension."""
        return int(self.points.shape[1])

    @property
    def sizes(self) -> np.ndarray:
        """Per-level counts N_a."""
        return np.bincount(self.labels, minlength=self.r)

    def attribute_points(self, a: int) -> np.ndarray:
        """Rows of ``points`` with level ``a``, in dataset order."""
        return self.points[self.per_attribute_index[a]]

    def validate(self) -> None:
        """Raise InvalidInputError when the dataset breaks its invariants."""

        if self.r < 1:
            raise InvalidInputError(f"r must be >= 1, got {self.r}")
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise InvalidInputError("points must be an N x d matrix with d >= 1")
        if self.labels.shape != (self.points.shape[0],):
            raise InvalidInputError(
                f"labels length {self.labels.shape} does not match {self.points.shape[0]} points"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.r):
            raise InvalidInputError(f"labels must lie in 0..{self.r - 1}")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("points contain non-finite values")
        empty = [a for a, count in enumerate(np.bincount(self.labels, minlength=self.r)) if count == 0]
        if empty:
            raise InvalidInputError(f"attribute levels without observations: {empty}")
        if len(self.level_names) != self.r:
            raise InvalidInputError("level_names must have one entry per attribute level")

    def with_labels(self, labels: Sequence[int]) -> "LabeledDataset":
        """Return a copy carrying new attribute labels (points shared)."""

        return LabeledDataset(
            points=self.points,
            labels=np.asarray(labels, dtype=np.int64),
            r=self.r,
            level_names=list(self.level_names),
            feature_names=list(self.feature_names),
        )

    def subset(self, rows: Sequence[int]) -> "LabeledDataset":
        """Return the dataset restricted to ``rows`` (order kept)."""

        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            points=self.points[rows],
            labels=self.labels[rows],
            r=self.r,
            level_names=list(self.level_names),
            feature_names=list(self.feature_names),
        )


@dataclass
class AttributeBeliefs:
    """Known membership probabilities p_i^(a) for an imperfectly observed attribute."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=float)
        self.validate()

    @property
    def r(self) -> int:
        return int(self.probs.shape[1])

    def validate(self) -> None:
        if self.probs.ndim != 2 or self.probs.shape[1] < 1:
            raise InvalidInputError("beliefs must be an N x r matrix")
        if np.any(self.probs < 0):
            raise InvalidInputError("beliefs must be nonnegative")
        row_sums = self.probs.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > SIMPLEX_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise InvalidInputError(f"belief row {worst} sums to {row_sums[worst]!r}, not 1")

    @classmethod
    def from_retention(
        cls, observed: Sequence[int], r: int, p_acc: float
    ) -> "AttributeBeliefs":
        """Beliefs for labels kept with probability p_acc and swapped otherwise.

        The observed level receives p_acc; the remaining mass is spread evenly
        over the other levels.
        """

        if not 0.0 <= p_acc <= 1.0:
            raise InvalidInputError(f"p_acc must lie in [0, 1], got {p_acc}")
        if r < 2:
            raise InvalidInputError("retention beliefs need at least two levels")
        observed = np.asarray(observed, dtype=np.int64)
        probs = np.full((observed.size, r), (1.0 - p_acc) / (r - 1))
        probs[np.arange(observed.size), observed] = p_acc
        return cls(probs=probs)

    @classmethod
    def one_hot(cls, labels: Sequence[int], r: Optional[int] = None) -> "AttributeBeliefs":
        labels = np.asarray(labels, dtype=np.int64)
        r = int(labels.max()) + 1 if r is None else r
        probs = np.zeros((labels.size, r))
        probs[np.arange(labels.size), labels] = 1.0
        return cls(probs=probs)
