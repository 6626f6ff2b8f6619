"""Prior calibration: simulated balance under the HFDP prior and lifted-Beta vs Beta-Binomial occupancies."""

from __future__ import annotations

import itertools
import logging
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import betaln, gammaln
from scipy.stats import beta as beta_dist

from .errors import InvalidInputError
from .model import sample_dirichlet
from .schema import QUANTILE_LEVELS, CalibrationRow, CalibrationSummary

logger = logging.getLogger(__name__)

PMF_FLOOR = 1e-300
MIN_DRAWS = 100


def prior_balance_distribution(
    g: float,
    b: float,
    K: int,
    r: int,
    n_draws: int,
    rng: np.random.Generator,
    identical_levels: bool = False,
) -> CalibrationRow:
    """Quantiles of balance and KL(w^(1) || w^(2)) under (alpha0, beta, w) drawn from the prior.

    Balance of one draw is min_k min_a w_k^(a) / max_a w_k^(a) over clusters
    carrying weight. ``identical_levels`` copies w^(1) into every level.
    """

    if not (g > 0 and b > 0):
        raise InvalidInputError("g and b must be positive")
    if K < 2 or r < 2:
        raise InvalidInputError("calibration needs K >= 2 and r >= 2")
    if n_draws < MIN_DRAWS:
        raise InvalidInputError(f"n_draws must be at least {MIN_DRAWS}")

    balances = np.empty(n_draws)
    kls = np.empty(n_draws)
    for i in range(n_draws):
        alpha0 = rng.gamma(g, 1.0 / b)
        beta = sample_dirichlet(np.full(K, g / K), rng)
        concentration = np.maximum(alpha0 * beta, PMF_FLOOR)
        if identical_levels:
            w = np.tile(sample_dirichlet(concentration, rng), (r, 1))
        else:
            w = np.vstack([sample_dirichlet(concentration, rng) for _ in range(r)])
        balances[i] = weight_balance(w)
        kls[i] = weight_kl(w[0], w[1])

    return CalibrationRow(
        g=float(g),
        b=float(b),
        K=int(K),
        balance_quantiles=_quantiles(balances),
        kl_quantiles=_quantiles(kls),
        n_draws=int(n_draws),
    )


def weight_balance(w: np.ndarray) -> float:
    high = w.max(axis=0)
    low = w.min(axis=0)
    live = high > 0
    return float(np.min(low[live] / high[live]))


def weight_kl(w1: np.ndarray, w2: np.ndarray) -> float:
    p = np.maximum(w1, PMF_FLOOR)
    q = np.maximum(w2, PMF_FLOOR)
    return max(float(np.sum(w1 * (np.log(p) - np.log(q)))), 0.0)


def lifted_beta_pmf(N: int, gamma1: float, gamma2: float) -> np.ndarray:
    """Law of m_1 = rd(N, (w, 1 - w))_1 with w ~ Beta(gamma1, gamma2).

    m_1 = j exactly when N w falls in [j - 1/2, j + 1/2), so each mass is a
    Beta CDF difference over that interval clipped to [0, 1].
    """

    _check_pmf_args(N, gamma1, gamma2)
    j = np.arange(N + 1)
    upper = beta_dist.cdf(np.clip((j + 0.5) / N, 0.0, 1.0), gamma1, gamma2)
    lower = beta_dist.cdf(np.clip((j - 0.5) / N, 0.0, 1.0), gamma1, gamma2)
    return np.maximum(upper - lower, 0.0)


def beta_binomial_pmf(N: int, gamma1: float, gamma2: float) -> np.ndarray:
    """Dirichlet-Multinomial occupancy law for K = 2."""

    _check_pmf_args(N, gamma1, gamma2)
    j = np.arange(N + 1)
    log_choose = gammaln(N + 1.0) - gammaln(j + 1.0) - gammaln(N - j + 1.0)
    return np.exp(log_choose + betaln(j + gamma1, N - j + gamma2) - betaln(gamma1, gamma2))


def symmetric_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) + KL(q || p), flooring zero masses at 1e-300."""

    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError("distributions must share their support")
    if np.any(p <= 0) or np.any(q <= 0):
        logger.warning("Flooring %d zero pmf entries at %g", int(np.sum(p <= 0) + np.sum(q <= 0)), PMF_FLOOR)
    log_p = np.log(np.maximum(p, PMF_FLOOR))
    log_q = np.log(np.maximum(q, PMF_FLOOR))
    return max(float(np.sum((p - q) * (log_p - log_q))), 0.0)


def sym_kl_lifted_vs_bb(N: int, gamma1: float, gamma2: float) -> float:
    return symmetric_kl(lifted_beta_pmf(N, gamma1, gamma2), beta_binomial_pmf(N, gamma1, gamma2))


def calibration_grid(
    g_values: Sequence[float],
    b_values: Sequence[float],
    K: int,
    r: int,
    n_draws: int,
    seed: int,
) -> CalibrationSummary:
    """prior_balance_distribution over every (g, b) pair, each with its own spawned stream."""

    pairs = list(itertools.product(g_values, b_values))
    streams = np.random.SeedSequence(seed).spawn(len(pairs))
    summary = CalibrationSummary()
    for (g, b), stream in zip(pairs, streams):
        row = prior_balance_distribution(g, b, K, r, n_draws, np.random.default_rng(stream))
        logger.debug("g=%g b=%g median balance %.4f", g, b, row.balance_quantiles[0.5])
        summary.rows.append(row)
    logger.info("Calibrated %d (g, b) pairs with %d draws each", len(pairs), n_draws)
    return summary


def sym_kl_grid(
    N_values: Iterable[int],
    gamma_values: Iterable[float],
    gamma2_values: Optional[Iterable[float]] = None,
) -> pd.DataFrame:
    """Symmetrized KL between the lifted and Beta-Binomial laws over N x gamma1 x gamma2."""

    gamma_values = list(gamma_values)
    gamma2_values = gamma_values if gamma2_values is None else list(gamma2_values)
    rows = [
        {"N": int(N), "gamma1": float(g1), "gamma2": float(g2), "sym_kl": sym_kl_lifted_vs_bb(int(N), g1, g2)}
        for N in N_values
        for g1 in gamma_values
        for g2 in gamma2_values
    ]
    return pd.DataFrame(rows, columns=["N", "gamma1", "gamma2", "sym_kl"])


def calibration_table(summary: CalibrationSummary) -> pd.DataFrame:
    """One row per (g, b) pair with balance_qXX and kl_qXX columns."""

    records = []
    for row in summary.rows:
        record = {"g": row.g, "b": row.b, "K": row.K, "n_draws": row.n_draws}
        for level in QUANTILE_LEVELS:
            record[f"balance_q{int(round(level * 100)):02d}"] = row.balance_quantiles[level]
        for level in QUANTILE_LEVELS:
            record[f"kl_q{int(round(level * 100)):02d}"] = row.kl_quantiles[level]
        records.append(record)
    return pd.DataFrame(records)


def _quantiles(values: np.ndarray) -> dict:
    levels = np.asarray(QUANTILE_LEVELS)
    return {float(q): float(v) for q, v in zip(levels, np.quantile(values, levels))}


def _check_pmf_args(N: int, gamma1: float, gamma2: float) -> None:
    if int(N) != N or N < 1:
        raise InvalidInputError(f"N must be a positive integer, got {N}")
    if not (gamma1 > 0 and gamma2 > 0):
        raise InvalidInputError("gamma1 and gamma2 must be positive")
