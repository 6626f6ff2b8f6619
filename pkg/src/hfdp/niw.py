"""Normal-Inverse-Wishart algebra: sufficient statistics, posterior updates and collapsed marginals.

Everything is computed in log space; determinants and quadratic forms go
through a Cholesky factor. A singular scale matrix gets one retry with a
small diagonal jitter (1e-9 times its mean eigenvalue) before failing; a
matrix whose mean eigenvalue is below machine epsilon fails at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import multigammaln

from .errors import InvalidInputError, NumericalDegeneracyError
from .schema import NiwParams

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_SCALE = 1e-9
MIN_JITTER_REFERENCE = float(np.finfo(float).eps)


@dataclass
class ClusterSufficientStats:
    """Per-cluster counts, means and scatter matrices for one attribute level."""

    counts: np.ndarray  # (K,)
    means: np.ndarray  # (K, d); zero rows for empty clusters
    scatters: np.ndarray  # (K, d, d); zero blocks for empty clusters

    @property
    def K(self) -> int:
        return int(self.counts.shape[0])

    @property
    def d(self) -> int:
        return int(self.means.shape[1])


@dataclass
class NiwPosterior:
    """Posterior NIW quadruples for every cluster of one level, stacked along axis 0."""

    mu: np.ndarray  # (K, d)
    lam: np.ndarray  # (K,)
    Lam: np.ndarray  # (K, d, d)
    nu: np.ndarray  # (K,)


def cluster_sufficient_stats(points: np.ndarray, labels: np.ndarray, K: int) -> ClusterSufficientStats:
    """Accumulate counts, means and centred scatter matrices of each cluster."""

    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if points.ndim != 2:
        raise InvalidInputError("points must be an N x d matrix")
    if labels.shape != (points.shape[0],):
        raise InvalidInputError("one label per point is required")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InvalidInputError(f"labels must lie in 0..{K - 1}")

    d = points.shape[1]
    counts = np.bincount(labels, minlength=K)
    sums = np.zeros((K, d))
    np.add.at(sums, labels, points)
    means = np.zeros((K, d))
    occupied = counts > 0
    means[occupied] = sums[occupied] / counts[occupied, None]

    centred = points - means[labels]
    scatters = np.zeros((K, d, d))
    np.add.at(scatters, labels, centred[:, :, None] * centred[:, None, :])
    # Symmetrize away round-off so downstream Cholesky sees an exact symmetric matrix.
    scatters = 0.5 * (scatters + np.transpose(scatters, (0, 2, 1)))
    return ClusterSufficientStats(counts=counts, means=means, scatters=scatters)


def niw_posterior_params(stats: ClusterSufficientStats, prior: NiwParams) -> NiwPosterior:
    """Conjugate NIW update for every cluster; empty clusters keep the prior exactly."""

    if np.any(stats.counts < 0):
        raise InvalidInputError("cluster counts must be nonnegative")
    if stats.d != prior.d:
        raise InvalidInputError(f"stats have dimension {stats.d}, prior has {prior.d}")

    counts = stats.counts.astype(float)
    lam = prior.lambda0 + counts
    nu = prior.nu0 + counts
    mu = (prior.lambda0 * prior.mu0[None, :] + counts[:, None] * stats.means) / lam[:, None]

    diff = stats.means - prior.mu0[None, :]
    shrink = prior.lambda0 * counts / lam
    Lam = prior.Lambda0[None, :, :] + stats.scatters + shrink[:, None, None] * (
        diff[:, :, None] * diff[:, None, :]
    )

    empty = stats.counts == 0
    if np.any(empty):
        mu[empty] = prior.mu0
        Lam[empty] = prior.Lambda0
    return NiwPosterior(mu=mu, lam=lam, Lam=Lam, nu=nu)


def log_marginal_z(
    z_a: np.ndarray,
    data_a: np.ndarray,
    prior: NiwParams,
    K: Optional[int] = None,
    attribute: Optional[int] = None,
) -> float:
    """Collapsed log marginal of one level's labels (up to a z-independent constant)."""

    z_a = np.asarray(z_a, dtype=np.int64)
    if K is None:
        K = int(z_a.max()) + 1 if z_a.size else 1
    stats = cluster_sufficient_stats(data_a, z_a, K)
    post = niw_posterior_params(stats, prior)
    d = prior.d

    _, logdet0 = _chol_logdet(prior.Lambda0, prior.Lambda0, attribute=attribute)
    total = 0.0
    for k in np.flatnonzero(stats.counts):
        _, logdet_k = _chol_logdet(post.Lam[k], prior.Lambda0, attribute=attribute, cluster=int(k))
        total += (
            multigammaln(post.nu[k] / 2.0, d)
            - multigammaln(prior.nu0 / 2.0, d)
            + 0.5 * d * (np.log(prior.lambda0) - np.log(post.lam[k]))
            + 0.5 * prior.nu0 * logdet0
            - 0.5 * post.nu[k] * logdet_k
        )
    return float(total)


def posterior_predictive_plugin(
    stats: ClusterSufficientStats, prior: NiwParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Plug-in component parameters (mu_k, Lambda_k / (nu_k - d - 1)) for every cluster.

    The divisor is floored at 1 so that weakly informed clusters still get a
    proper covariance.
    """

    post = niw_posterior_params(stats, prior)
    divisor = np.maximum(post.nu - prior.d - 1.0, 1.0)
    covs = post.Lam / divisor[:, None, None]
    return post.mu, covs


def gaussian_logpdf(
    points: np.ndarray,
    mean: np.ndarray,
    cov: np.ndarray,
    attribute: Optional[int] = None,
    cluster: Optional[int] = None,
) -> np.ndarray:
    """Row-wise log N_d(x | mean, cov) through a Cholesky factor."""

    points = np.atleast_2d(np.asarray(points, dtype=float))
    chol, logdet = _chol_logdet(cov, cov, attribute=attribute, cluster=cluster)
    centred = (points - mean).T
    solved = solve_triangular(chol, centred, lower=True, check_finite=False)
    maha = np.sum(solved * solved, axis=0)
    return -0.5 * (points.shape[1] * LOG_2PI + logdet + maha)


def default_niw_prior(points: np.ndarray) -> NiwParams:
    """Weakly informative prior centred on the data.

    mu0 is the sample mean, lambda0 = 0.01, nu0 = d + 2 and Lambda0 is the
    diagonal of the per-coordinate variances (floored at 1e-6), so that the
    prior-mean covariance matches the marginal spread of the data.
    """

    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    variances = points.var(axis=0) if points.shape[0] > 1 else np.ones(d)
    variances = np.maximum(variances, 1e-6)
    nu0 = d + 2.0
    return NiwParams(
        mu0=points.mean(axis=0),
        lambda0=0.01,
        Lambda0=np.diag((nu0 - d - 1.0) * variances),
        nu0=nu0,
    )


def _chol_logdet(
    matrix: np.ndarray,
    reference: np.ndarray,
    attribute: Optional[int] = None,
    cluster: Optional[int] = None,
) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor and log-determinant, retrying once with jitter.

    The jitter is sized from ``reference``; a reference without a usable
    scale (zero or subnormal mean eigenvalue) is reported as degenerate.
    """

    try:
        chol = cholesky(matrix, lower=True, check_finite=False)
    except LinAlgError:
        d = matrix.shape[0]
        scale = float(np.trace(reference)) / d
        if not (np.isfinite(scale) and scale > MIN_JITTER_REFERENCE):
            raise NumericalDegeneracyError(
                f"scale matrix is singular and its reference scale {scale:.3g} is too small to regularize",
                attribute=attribute,
                cluster=cluster,
            )
        jitter = JITTER_SCALE * scale
        logger.warning("Cholesky failed; retrying with jitter %.3g", jitter)
        try:
            chol = cholesky(matrix + jitter * np.eye(d), lower=True, check_finite=False)
        except LinAlgError as exc:
            raise NumericalDegeneracyError(
                "scale matrix is not positive definite", attribute=attribute, cluster=cluster
            ) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return chol, logdet
