"""Fairness metrics: balance, the attribute/cluster independence pivot and the fair-score."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dataset import AttributeBeliefs, LabeledDataset
from .errors import InvalidInputError, NumericalDegeneracyError
from .niw import gaussian_logpdf
from .schema import FairnessReport

logger = logging.getLogger(__name__)

RIDGE_SCALE = 1e-6
RIDGE_FLOOR = 1e-3


@dataclass
class ContingencyTable:
    """r x K counts N_{a,k} of observations with level a in cluster k."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.atleast_2d(np.asarray(self.counts))
        if np.any(self.counts < 0):
            raise InvalidInputError("contingency counts must be nonnegative")

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self):
        return self.counts.sum()


def contingency_table(z: Sequence[int], labels: Sequence[int], K: int, r: int) -> ContingencyTable:
    """Cross-tabulate attribute levels against cluster labels."""

    z = np.asarray(z, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape != labels.shape:
        raise InvalidInputError("z and labels must have the same length")
    if z.size and (z.min() < 0 or z.max() >= K):
        raise InvalidInputError(f"cluster labels must lie in 0..{K - 1}")
    counts = np.zeros((r, K), dtype=np.int64)
    np.add.at(counts, (labels, z), 1)
    return ContingencyTable(counts=counts)


def balance(table: ContingencyTable) -> Tuple[np.ndarray, float]:
    """Per-cluster balance (NaN for empty clusters) and the overall minimum.

    A cluster's balance is min over level pairs of the smaller count ratio,
    i.e. min_a N_{a,k} / max_a N_{a,k}; a missing level gives 0.
    """

    counts = np.asarray(table.counts, dtype=float)
    sizes = counts.sum(axis=0)
    occupied = sizes > 0
    if not np.any(occupied):
        raise InvalidInputError("balance is undefined when every cluster is empty")

    per_cluster = np.full(counts.shape[1], np.nan)
    high = counts[:, occupied].max(axis=0)
    low = counts[:, occupied].min(axis=0)
    per_cluster[occupied] = low / high
    return per_cluster, float(per_cluster[occupied].min())


def mi_pivot(table: ContingencyTable) -> float:
    """KL(P_A x P_Z || P_{A,Z}) on empirical proportions.

    Infinite when a cell is empty while both of its marginals are positive.
    """

    counts = np.asarray(table.counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise InvalidInputError("the contingency table is empty")
    joint = counts / total
    product = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    live = product > 0
    if np.any(live & (joint == 0)):
        return float("inf")
    value = float(np.sum(product[live] * np.log(product[live] / joint[live])))
    return max(value, 0.0)


def epsilon_fair_set_check(z: Sequence[int], dataset: LabeledDataset, epsilon: float) -> bool:
    """Membership of z in the epsilon-balanced set."""

    z = np.asarray(z, dtype=np.int64)
    table = contingency_table(z, dataset.labels, int(z.max()) + 1, dataset.r)
    return mi_pivot(table) <= epsilon


def fair_score(
    z: Sequence[int],
    dataset: LabeledDataset,
    epsilon: float,
    max_clusters: Optional[int] = None,
) -> float:
    """Empirical fair-score of a full assignment, -inf outside the epsilon-balanced set.

    Sum of the cluster-given-level log proportions, the Gaussian log
    likelihood under per-(level, cluster) maximum-likelihood fits, and the
    level log proportions. Every fitted covariance carries a ridge of at
    least RIDGE_FLOOR times the mean coordinate variance of the dataset, so
    duplicated points or a one-row level cannot blow up the density term.
    """

    z = np.asarray(z, dtype=np.int64)
    if z.shape != (dataset.n,):
        raise InvalidInputError(f"assignment has {z.size} entries, dataset has {dataset.n}")
    if epsilon < 0:
        raise InvalidInputError("epsilon must be nonnegative")
    if z.size and z.min() < 0:
        raise InvalidInputError("cluster labels must be nonnegative")
    K = int(z.max()) + 1
    if max_clusters is not None and K > max_clusters:
        raise InvalidInputError(f"assignment uses {K} cluster labels, cap is {max_clusters}")

    table = contingency_table(z, dataset.labels, K, dataset.r)
    if mi_pivot(table) > epsilon:
        return float("-inf")

    counts = table.counts
    sizes = table.row_sums
    with np.errstate(divide="ignore"):
        log_pi = np.where(counts > 0, np.log(counts / sizes[:, None]), 0.0)
    partition_term = float(np.sum(counts * log_pi))
    level_term = float(np.sum(sizes * np.log(sizes / dataset.n)))

    density_term = 0.0
    d = dataset.d
    floor = _ridge_floor(dataset)
    for a in range(dataset.r):
        idx = dataset.per_attribute_index[a]
        x_a = dataset.points[idx]
        z_a = z[idx]
        pooled = _ridged_mle_cov(x_a, floor)
        for k in np.unique(z_a):
            members = x_a[z_a == k]
            cov = _ridged_mle_cov(members, floor) if members.shape[0] >= d + 2 else pooled
            density_term += float(
                np.sum(gaussian_logpdf(members, members.mean(axis=0), cov, attribute=a, cluster=int(k)))
            )
    return partition_term + density_term + level_term


def fairness_report(
    z: Sequence[int],
    dataset: LabeledDataset,
    epsilon: float,
    max_clusters: Optional[int] = None,
) -> FairnessReport:
    """Bundle balance, pivot, epsilon verdict and fair-score for one assignment."""

    z = np.asarray(z, dtype=np.int64)
    table = contingency_table(z, dataset.labels, int(z.max()) + 1, dataset.r)
    per_cluster, overall = balance(table)
    mi = mi_pivot(table)
    return FairnessReport(
        per_cluster_balance=per_cluster,
        overall_balance=overall,
        mi=mi,
        epsilon=float(epsilon),
        epsilon_ok=bool(mi <= epsilon),
        fair_score=fair_score(z, dataset, epsilon, max_clusters=max_clusters),
    )


def expected_balance(z: Sequence[int], beliefs: AttributeBeliefs) -> Tuple[np.ndarray, float]:
    """Balance of the expected level counts sum_i p_i^(a) 1(z_i = k)."""

    z = np.asarray(z, dtype=np.int64)
    if z.shape != (beliefs.probs.shape[0],):
        raise InvalidInputError("one belief row per assigned observation is required")
    K = int(z.max()) + 1
    expected = np.zeros((beliefs.r, K))
    np.add.at(expected.T, z, beliefs.probs)
    return balance(ContingencyTable(counts=expected))


def flip_labels(
    z: Sequence[int], fraction: float, K: int, rng: np.random.Generator
) -> np.ndarray:
    """Move round(fraction * N) random observations to a different random cluster."""

    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError(f"fraction must lie in [0, 1], got {fraction}")
    if K < 2:
        raise InvalidInputError("flipping needs at least two clusters")
    flipped = np.array(z, dtype=np.int64)
    n_flip = int(np.floor(fraction * flipped.size + 0.5))
    rows = rng.choice(flipped.size, size=n_flip, replace=False)
    shift = rng.integers(1, K, size=n_flip)
    flipped[rows] = (flipped[rows] + shift) % K
    return flipped


def _ridged_mle_cov(points: np.ndarray, floor: float) -> np.ndarray:
    """Maximum-likelihood covariance plus a ridge of at least ``floor`` on the diagonal."""

    d = points.shape[1]
    centred = points - points.mean(axis=0)
    cov = centred.T @ centred / max(points.shape[0], 1)
    ridge = max(RIDGE_SCALE * np.trace(cov) / d, floor)
    return cov + ridge * np.eye(d)


def _ridge_floor(dataset: LabeledDataset) -> float:
    """RIDGE_FLOOR times the mean per-coordinate variance of the whole dataset."""

    spread = float(np.mean(dataset.points.var(axis=0)))
    if not spread > 0:
        raise NumericalDegeneracyError("all points coincide; the fair-score density term is undefined")
    return RIDGE_FLOOR * spread
