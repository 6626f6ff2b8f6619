"""The HFDP generative model: occupancy rounding, prior draws and component draws."""

from __future__ import annotations

import logging
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import invwishart

from .errors import InvalidInputError
from .schema import SIMPLEX_TOL, ChainState, HfdpConfig, NiwParams

logger = logging.getLogger(__name__)


def rd(n: int, u: Sequence[float]) -> np.ndarray:
    """Round n * u to a composition of n.

    Entries 0..t-2 are rounded half-up and the last entry takes the
    remainder. When the remainder would be negative, the leading entry with
    the largest excess v_i - n * u_i is decremented (lowest index on ties)
    until the remainder reaches zero.
    """

    u = np.asarray(u, dtype=float)
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n}")
    if u.ndim != 1 or u.size < 1:
        raise InvalidInputError("u must be a nonempty vector")
    if np.any(u < 0) or abs(u.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidInputError("u must lie on the probability simplex")

    n = int(n)
    target = n * u
    v = np.floor(target + 0.5).astype(np.int64)
    v[-1] = 0
    remainder = n - int(v[:-1].sum())
    while remainder < 0:
        excess = np.where(v[:-1] > 0, v[:-1] - target[:-1], -np.inf)
        v[int(np.argmax(excess))] -= 1
        remainder += 1
    v[-1] = remainder
    return v


def uniform_labels(m: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the label vectors whose occupancy is exactly m."""

    m = np.asarray(m, dtype=np.int64)
    return rng.permutation(np.repeat(np.arange(m.size), m))


def sample_dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw that survives tiny concentrations.

    Uses Gamma(a) = Gamma(a + 1) * U^(1/a) and normalizes in log space, so
    components far below machine precision come back as exact zeros instead
    of turning the whole draw into NaN.
    """

    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise InvalidInputError("Dirichlet parameters must be positive and finite")
    log_g = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.uniform(size=alpha.shape)) / alpha
    w = np.exp(log_g - logsumexp(log_g))
    return w / w.sum()


def sample_prior_state(
    config: HfdpConfig, sizes: Sequence[int], rng: np.random.Generator
) -> ChainState:
    """Forward draw of (alpha0, beta, w, m, z) from the HFDP prior."""

    if not isinstance(rng, np.random.Generator):
        raise InvalidInputError("rng must be a numpy.random.Generator")
    config.validate()
    sizes = np.asarray(sizes, dtype=np.int64)
    if sizes.ndim != 1 or sizes.size < 1 or np.any(sizes < 1):
        raise InvalidInputError("every level needs at least one observation")

    K = config.K
    alpha0 = float(rng.gamma(config.g, 1.0 / config.b))
    beta = sample_dirichlet(np.full(K, config.g / K), rng)
    w = np.vstack([_dirichlet_given(alpha0, beta, rng) for _ in sizes])
    m = np.vstack([rd(int(n_a), w_a) for n_a, w_a in zip(sizes, w)])
    z = [uniform_labels(m_a, rng) for m_a in m]
    return ChainState(alpha0=alpha0, beta=beta, w=w, m=m, z=z)


def sample_component_params(
    priors: Sequence[NiwParams], K: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw (mu_k^(a), Sigma_k^(a)) from each level's NIW prior.

    Returns means of shape (r, K, d) and covariances of shape (r, K, d, d).
    """

    if K < 1:
        raise InvalidInputError("K must be positive")
    means, covs = [], []
    for prior in priors:
        prior.validate()
        d = prior.d
        sigma = invwishart.rvs(df=prior.nu0, scale=prior.Lambda0, size=K, random_state=rng)
        sigma = np.asarray(sigma, dtype=float).reshape(K, d, d)
        sigma = 0.5 * (sigma + np.transpose(sigma, (0, 2, 1)))
        mu = np.stack(
            [rng.multivariate_normal(prior.mu0, sigma_k / prior.lambda0) for sigma_k in sigma]
        )
        means.append(mu)
        covs.append(sigma)
    return np.stack(means), np.stack(covs)


def _dirichlet_given(alpha0: float, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # beta can carry exact zeros after a tiny-concentration draw; keep the parameters positive.
    return sample_dirichlet(np.maximum(alpha0 * beta, 1e-300), rng)
