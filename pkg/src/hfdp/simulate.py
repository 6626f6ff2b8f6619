"""Synthetic datasets for the simulation designs, with their ground-truth clusterings."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import multivariate_t

from .config import GeneratorSpec
from .dataset import AttributeBeliefs, LabeledDataset
from .errors import InvalidInputError
from .model import rd, sample_component_params, sample_dirichlet, sample_prior_state
from .schema import HfdpConfig

logger = logging.getLogger(__name__)


@dataclass
class SimulatedData:
    """A generated dataset, its true clusters and, for imperfect designs, the true levels."""

    dataset: LabeledDataset
    truth: np.ndarray
    true_levels: Optional[np.ndarray] = None
    beliefs: Optional[AttributeBeliefs] = None


def generate(spec: GeneratorSpec, rng: np.random.Generator) -> SimulatedData:
    """Draw one dataset. Rows are ordered by level, then by cluster."""

    spec.validate()
    if spec.family == "prior":
        return _generate_from_prior(spec, rng)

    occupancy = _occupancy(spec, rng)
    means = np.asarray(spec.means, dtype=float)
    cov = spec.scale_matrix
    points, labels, truth = [], [], []
    for a in range(spec.r):
        for k in range(spec.K_true):
            n = int(occupancy[a, k])
            if n == 0:
                continue
            points.append(_draw_component(spec, means[a, k], cov, n, rng))
            labels.append(np.full(n, a))
            truth.append(np.full(n, k))

    levels = np.concatenate(labels)
    data = SimulatedData(
        dataset=LabeledDataset(points=np.vstack(points), labels=levels, r=spec.r),
        truth=np.concatenate(truth),
    )
    if spec.p_acc is not None:
        data = _degrade_levels(data, spec.p_acc, rng)
    logger.info("Generated design %s: N=%d, occupancy %s", spec.name, data.dataset.n, occupancy.tolist())
    return data


def multivariate_skew_normal(
    location: np.ndarray,
    scale: np.ndarray,
    skewness: np.ndarray,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Azzalini skew-normal draws through the select-sign construction.

    A latent (x0, Z) is jointly Gaussian with corr(x0, Z) = delta; the draw
    is Z when x0 > 0 and -Z otherwise, then rescaled and shifted.
    """

    scale = np.asarray(scale, dtype=float)
    skewness = np.asarray(skewness, dtype=float)
    d = scale.shape[0]
    omega = np.sqrt(np.diag(scale))
    correlation = scale / np.outer(omega, omega)
    delta = correlation @ skewness / np.sqrt(1.0 + skewness @ correlation @ skewness)

    joint = np.empty((d + 1, d + 1))
    joint[0, 0] = 1.0
    joint[0, 1:] = delta
    joint[1:, 0] = delta
    joint[1:, 1:] = correlation
    latent = rng.multivariate_normal(np.zeros(d + 1), joint, size=size)
    signs = np.where(latent[:, 0] > 0, 1.0, -1.0)
    return location + omega * (signs[:, None] * latent[:, 1:])


def _draw_component(
    spec: GeneratorSpec, mean: np.ndarray, cov: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    if spec.family == "normal":
        return rng.multivariate_normal(mean, cov, size=n)
    if spec.family == "t":
        draws = multivariate_t.rvs(loc=mean, shape=cov, df=spec.df, size=n, random_state=rng)
        return np.asarray(draws, dtype=float).reshape(n, -1)
    if spec.family == "skew_normal":
        return multivariate_skew_normal(mean, cov, np.asarray(spec.skewness), n, rng)
    raise InvalidInputError(f"no component sampler for family {spec.family!r}")


def _occupancy(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Fixed occupancy, or rd(N_a, w^(a)) with (alpha0, beta, w) drawn from the prior."""

    if spec.occupancy is not None:
        return np.asarray(spec.occupancy, dtype=np.int64)
    K = spec.K_true
    alpha0 = rng.gamma(spec.g, 1.0 / spec.b)
    beta = sample_dirichlet(np.full(K, spec.g / K), rng)
    concentration = np.maximum(alpha0 * beta, 1e-300)
    return np.vstack([rd(int(n_a), sample_dirichlet(concentration, rng)) for n_a in spec.sizes])


def _generate_from_prior(spec: GeneratorSpec, rng: np.random.Generator) -> SimulatedData:
    config = HfdpConfig(K=max(spec.K_true, 2), g=spec.g, b=spec.b)
    state = sample_prior_state(config, spec.sizes, rng)
    means, covs = sample_component_params([spec.niw] * spec.r, config.K, rng)
    points, labels, truth = [], [], []
    for a in range(spec.r):
        z_a = np.sort(state.z[a])
        block = np.empty((z_a.size, spec.niw.d))
        for k in np.unique(z_a):
            rows = z_a == k
            block[rows] = rng.multivariate_normal(means[a, k], covs[a, k], size=int(rows.sum()))
        points.append(block)
        labels.append(np.full(z_a.size, a))
        truth.append(z_a)
    dataset = LabeledDataset(points=np.vstack(points), labels=np.concatenate(labels), r=spec.r)
    logger.info("Generated prior design: N=%d, occupancy %s", dataset.n, state.m.tolist())
    return SimulatedData(dataset=dataset, truth=np.concatenate(truth))


def _degrade_levels(data: SimulatedData, p_acc: float, rng: np.random.Generator) -> SimulatedData:
    """Keep each level with probability p_acc, otherwise swap it for a uniformly chosen other level."""

    true_levels = data.dataset.labels.copy()
    r = data.dataset.r
    swap = rng.uniform(size=true_levels.size) >= p_acc
    shift = rng.integers(1, r, size=true_levels.size) if r > 1 else np.zeros(true_levels.size, dtype=np.int64)
    observed = np.where(swap, (true_levels + shift) % r, true_levels)
    return SimulatedData(
        dataset=data.dataset.with_labels(observed),
        truth=data.truth,
        true_levels=true_levels,
        beliefs=AttributeBeliefs.from_retention(observed, r, p_acc),
    )
