"""Collapsed Gibbs sampler and MC-EM optimizer for the HFDP fair clustering model.

One sweep updates, in order: the concentration alpha0, the global weights
beta, the per-level weights w and occupancies m, and finally the labels z.
With attribute beliefs the levels themselves are redrawn at the end of the
sweep.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, gammaln
from sklearn.cluster import kmeans_plusplus
from tqdm import tqdm

from .binmat import WeightMatrix, log_relative_probability, matrix_to_labels, wrla_run
from .dataset import AttributeBeliefs, LabeledDataset
from .errors import InternalConsistencyError, InvalidInputError
from .model import rd, sample_dirichlet, uniform_labels
from .niw import (
    cluster_sufficient_stats,
    default_niw_prior,
    gaussian_logpdf,
    log_marginal_z,
    posterior_predictive_plugin,
)
from .rejection import sample_t
from .schema import ChainState, ChainTrace, HfdpConfig, NiwParams, SweepDiagnostics
from .transport import TransportProblem, solve_assignment, solve_binary_ot

logger = logging.getLogger(__name__)

LOG_FLOOR = math.log(1e-300)
ADAPTATION_DECAY = 0.6
MAX_RELABEL_ATTEMPTS = 100


@dataclass
class McemResult:
    """Final state of an MC-EM run and the collapsed score after every sweep."""

    state: ChainState
    assignment: np.ndarray
    log_marginal: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def alpha0_log_density(alpha0: float, beta: np.ndarray, w: np.ndarray, g: float, b: float) -> float:
    """Unnormalized log full conditional of alpha0 given beta and w.

    r log Γ(α0) - r Σ_k log Γ(α0 β_k) + Σ_{a,k} α0 β_k log w_k^(a) + (g - 1) log α0 - b α0.
    Zero entries of beta and w are floored at 1e-300.
    """

    if not alpha0 > 0:
        return -math.inf
    r = w.shape[0]
    value = (g - 1.0) * math.log(alpha0) - b * alpha0
    if r:
        concentration = np.maximum(alpha0 * beta, 1e-300)
        log_w = np.maximum(np.log(np.maximum(w, 1e-300)), LOG_FLOOR)
        value += r * float(gammaln(alpha0)) - r * float(np.sum(gammaln(concentration)))
        value += float(np.sum(concentration * log_w.sum(axis=0)))
    return float(value)


def update_alpha0(
    state: ChainState,
    config: HfdpConfig,
    rng: np.random.Generator,
    scale: Optional[float] = None,
) -> Tuple[float, bool]:
    """Metropolis step on log alpha0 with a Gaussian random-walk proposal."""

    scale = config.alpha_proposal_scale if scale is None else scale
    current = alpha0_log_density(state.alpha0, state.beta, state.w, config.g, config.b)
    if not math.isfinite(current):
        raise InternalConsistencyError(f"alpha0 log-density is not finite at alpha0={state.alpha0}")

    proposal = state.alpha0 * math.exp(scale * rng.standard_normal())
    proposed = alpha0_log_density(proposal, state.beta, state.w, config.g, config.b)
    # The log-normal proposal contributes the Jacobian log(proposal / current).
    log_ratio = proposed - current + math.log(proposal) - math.log(state.alpha0)
    if math.log(rng.uniform()) < log_ratio:
        return proposal, True
    return state.alpha0, False


def sample_auxiliary_t(
    total: float,
    log_w: np.ndarray,
    g: float,
    b: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw t = alpha0 * beta given the level weights through r auxiliary Gamma variables.

    ``total`` is the current sum of t (that is, alpha0). ``log_w`` is r x K
    and may have zero rows, in which case t is drawn from its Gamma(g/K, b)
    prior.
    """

    r, K = log_w.shape
    log_u = np.log(rng.gamma(total, 1.0, size=r)) if r else np.zeros(0)
    log_p = np.maximum(log_w, LOG_FLOOR).sum(axis=0)
    rates = b - log_p - float(log_u.sum())
    return np.array([sample_t(g / K, float(rates[k]), r, rng, cluster=k) for k in range(K)])


def update_beta(state: ChainState, config: HfdpConfig, rng: np.random.Generator) -> ChainState:
    """Refresh (alpha0, beta) jointly from the auxiliary t and return the new state.

    Under the prior t_k are iid Gamma(g/K, b), alpha0 = Σ t and
    beta = t / Σ t, so one draw of t updates both.
    """

    log_w = np.log(np.maximum(state.w, 1e-300))
    t = sample_auxiliary_t(state.alpha0, log_w, config.g, config.b, rng)
    total = float(t.sum())
    if not (math.isfinite(total) and total > 0):
        raise InternalConsistencyError("auxiliary t has a non-positive total")
    new_state = state.copy()
    new_state.t = t
    new_state.alpha0 = total
    new_state.beta = t / total
    return new_state


def update_weights(
    state: ChainState,
    sizes: Sequence[int],
    rng: np.random.Generator,
    use_counts: bool = True,
) -> ChainState:
    """Draw w^(a) ~ Dir(alpha0 beta + m^(a)) and reset m^(a) = rd(N_a, w^(a)).

    z keeps its old labels; the z update that follows restores agreement
    between z and m. With ``use_counts=False`` the occupancies are left out
    and w^(a) is drawn from Dir(alpha0 beta), its exact conditional when the
    labels carry no likelihood.
    """

    new_state = state.copy()
    prior = np.maximum(state.alpha0 * state.beta, 1e-300)
    for a, n_a in enumerate(sizes):
        w_a = sample_dirichlet(prior + state.m[a] if use_counts else prior, rng)
        new_state.w[a] = w_a
        new_state.m[a] = rd(int(n_a), w_a)
    return new_state


def _log_dirichlet_norm(alpha: np.ndarray) -> float:
    return float(np.sum(gammaln(alpha)) - gammaln(np.sum(alpha)))


def update_occupancy(
    state: ChainState,
    dataset: LabeledDataset,
    rng: np.random.Generator,
    priors: Sequence[NiwParams],
) -> Tuple[ChainState, Tuple[bool, ...]]:
    """Metropolis move on (w^(a), m^(a), z^(a)) that lets the data set the occupancy.

    The proposal is the draw of update_weights, w' ~ Dir(alpha0 beta + m),
    m' = rd(N_a, w'), completed by z' = the transport optimum under m' with
    plug-in costs from the current labels. The level target is the collapsed
    posterior

        log p(x^(a) | z) + Σ_k (alpha0 beta_k + m_k - 1) log w_k

    and the acceptance ratio carries the Dirichlet proposal densities in both
    directions. A proposal that rounds back to the current m is a plain
    Dirichlet draw of w and is always taken. On return the occupancy of every
    z^(a) equals m^(a).
    """

    new_state = state.copy()
    K = state.K
    concentration = np.maximum(state.alpha0 * state.beta, 1e-300)
    flags = []
    for a in range(state.r):
        points = dataset.attribute_points(a)
        m_a, z_a = state.m[a], state.z[a]
        w_prop = sample_dirichlet(concentration + m_a, rng)
        m_prop = rd(points.shape[0], w_prop)
        if np.array_equal(m_prop, m_a):
            new_state.w[a] = w_prop
            flags.append(True)
            continue

        cost = label_costs(points, z_a, priors[a], K, a)
        z_prop = solve_assignment(TransportProblem(cost, m_prop))
        log_w = np.maximum(np.log(np.maximum(state.w[a], 1e-300)), LOG_FLOOR)
        log_w_prop = np.maximum(np.log(np.maximum(w_prop, 1e-300)), LOG_FLOOR)
        log_ratio = (
            log_marginal_z(z_prop, points, priors[a], K=K, attribute=a)
            - log_marginal_z(z_a, points, priors[a], K=K, attribute=a)
            + _log_dirichlet_norm(concentration + m_a)
            - _log_dirichlet_norm(concentration + m_prop)
            + float(np.sum((m_prop - m_a) * (log_w + log_w_prop)))
        )
        accepted = math.log(rng.uniform()) < log_ratio
        if accepted:
            new_state.w[a] = w_prop
            new_state.m[a] = m_prop
            new_state.z[a] = z_prop
        logger.debug("level %d occupancy move %s -> %s: log ratio %.3f, accepted=%s",
                     a, m_a.tolist(), m_prop.tolist(), log_ratio, accepted)
        flags.append(bool(accepted))
    return new_state, tuple(flags)


def label_costs(points: np.ndarray, z_a: np.ndarray, prior: NiwParams, K: int, attribute: int) -> np.ndarray:
    """N_a x K matrix of -log N(x_i | mu*_k, Sigma*_k) with plug-in parameters from z_a."""

    stats = cluster_sufficient_stats(points, z_a, K)
    means, covs = posterior_predictive_plugin(stats, prior)
    cost = np.empty((points.shape[0], K))
    for k in range(K):
        cost[:, k] = -gaussian_logpdf(points, means[k], covs[k], attribute=attribute, cluster=k)
    return cost


def update_z(
    state: ChainState,
    dataset: LabeledDataset,
    config: HfdpConfig,
    rng: np.random.Generator,
    priors: Sequence[NiwParams],
) -> Tuple[ChainState, Tuple[bool, ...]]:
    """Relabel every level so that its occupancy equals m^(a).

    The optimal-transport assignment is mutated by T weighted loop moves
    with weights omega_ik = N(x_i | mu*_k, Sigma*_k); the mutated matrix
    replaces the optimum with Barker probability. In strict mode the result
    then faces a Metropolis test on the collapsed marginal likelihood against
    the current labels, or against the transport optimum when the current
    labels do not have occupancy m^(a). The flag per level says whether the
    labels moved away from the optimum (or, in strict mode, whether the
    Metropolis correction accepted).
    """

    new_state = state.copy()
    K = state.K
    flags = []
    for a in range(state.r):
        m_a = state.m[a]
        if not config.use_likelihood:
            new_state.z[a] = uniform_labels(m_a, rng)
            flags.append(True)
            continue

        points = dataset.attribute_points(a)
        cost = label_costs(points, state.z[a], priors[a], K, a)
        proposal = solve_binary_ot(TransportProblem(cost, m_a))
        weights = WeightMatrix(log_weights=-cost)
        steps = config.wrla_steps_for(points.shape[0])
        mutated = wrla_run(proposal, weights, steps, rng)
        delta = log_relative_probability(mutated, proposal, weights)
        take_mutated = rng.uniform() < expit(delta)
        candidate = matrix_to_labels(mutated if take_mutated else proposal)

        if config.strict_z_move:
            reference = state.z[a]
            if not np.array_equal(np.bincount(reference, minlength=K), m_a):
                logger.debug("level %d: labels do not match m, correcting against the transport optimum", a)
                reference = matrix_to_labels(proposal)
            current_score = log_marginal_z(reference, points, priors[a], K=K, attribute=a)
            candidate_score = log_marginal_z(candidate, points, priors[a], K=K, attribute=a)
            accepted = math.log(rng.uniform()) < candidate_score - current_score
            new_state.z[a] = candidate if accepted else reference.copy()
            flags.append(bool(accepted))
        else:
            new_state.z[a] = candidate
            flags.append(bool(take_mutated))
    return new_state, tuple(flags)


def update_z_mode(
    state: ChainState, dataset: LabeledDataset, priors: Sequence[NiwParams]
) -> ChainState:
    """MC-EM z step: each level takes the optimal-transport assignment itself."""

    new_state = state.copy()
    for a in range(state.r):
        cost = label_costs(dataset.attribute_points(a), state.z[a], priors[a], state.K, a)
        new_state.z[a] = solve_assignment(TransportProblem(cost, state.m[a]))
    return new_state


def resample_attributes(
    dataset: LabeledDataset, beliefs: AttributeBeliefs, rng: np.random.Generator
) -> LabeledDataset:
    """Redraw every level a_i from its belief row p_i; every level must stay nonempty."""

    if beliefs.probs.shape != (dataset.n, dataset.r):
        raise InvalidInputError(
            f"beliefs must be {dataset.n} x {dataset.r}, got {beliefs.probs.shape}"
        )
    cumulative = np.cumsum(beliefs.probs, axis=1)
    for _ in range(MAX_RELABEL_ATTEMPTS):
        u = rng.uniform(size=(dataset.n, 1))
        labels = np.minimum((u >= cumulative).sum(axis=1), dataset.r - 1)
        if np.all(np.bincount(labels, minlength=dataset.r) > 0):
            return dataset.with_labels(labels)
    raise InvalidInputError("resampled attribute levels keep leaving a level empty")


def resolve_priors(dataset: LabeledDataset, config: HfdpConfig) -> List[NiwParams]:
    """Configured NIW priors, or the data-driven default for each level."""

    if config.niw is not None:
        return list(config.niw)
    return [default_niw_prior(dataset.attribute_points(a)) for a in range(dataset.r)]


def initial_state(
    dataset: LabeledDataset,
    config: HfdpConfig,
    rng: np.random.Generator,
    priors: Sequence[NiwParams],
) -> ChainState:
    """alpha0 = g/b, uniform beta, w^(a) = beta, m^(a) = rd(N_a, beta) and z from the
    transport optimum against k-means++ seeded centres."""

    K = config.K
    beta = np.full(K, 1.0 / K)
    w = np.tile(beta, (dataset.r, 1))
    m = np.vstack([rd(int(n_a), beta) for n_a in dataset.sizes])

    if dataset.n >= K:
        seed = int(rng.integers(0, 2**31 - 1))
        centres, _ = kmeans_plusplus(dataset.points, K, random_state=seed)
    else:
        centres = dataset.points[rng.choice(dataset.n, size=K, replace=True)]

    z = []
    for a in range(dataset.r):
        points = dataset.attribute_points(a)
        prior = priors[a]
        spread = prior.Lambda0 / max(prior.nu0 - prior.d - 1.0, 1.0)
        cost = np.column_stack(
            [-gaussian_logpdf(points, centres[k], spread, attribute=a, cluster=k) for k in range(K)]
        )
        z.append(solve_assignment(TransportProblem(cost, m[a])))
    return ChainState(alpha0=config.g / config.b, beta=beta, w=w, m=m, z=z)


def total_log_marginal(
    state: ChainState, dataset: LabeledDataset, priors: Sequence[NiwParams]
) -> float:
    return float(
        sum(
            log_marginal_z(state.z[a], dataset.attribute_points(a), priors[a], K=state.K, attribute=a)
            for a in range(state.r)
        )
    )


def run_gibbs(
    dataset: LabeledDataset,
    config: HfdpConfig,
    rng: Optional[np.random.Generator] = None,
    beliefs: Optional[AttributeBeliefs] = None,
    show_progress: bool = False,
) -> ChainTrace:
    """Run one chain and keep the thinned post-burn-in samples."""

    config.validate(r=dataset.r, d=dataset.d)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    priors = resolve_priors(dataset, config)
    state = initial_state(dataset, config, rng, priors)
    state.validate(dataset.sizes)

    burn_in = config.effective_burn_in
    scale = config.alpha_proposal_scale
    accepted_after_burn_in = 0
    occupancy_accepted = 0
    trace = ChainTrace(seed=config.seed)
    logger.info(
        "Starting Gibbs chain: N=%d, r=%d, K=%d, %d iterations (burn-in %d, thin %d)",
        dataset.n, dataset.r, config.K, config.iterations, burn_in, config.thin,
    )

    for iteration in tqdm(range(config.iterations), disable=not show_progress, desc="gibbs"):
        alpha0, alpha_accepted = update_alpha0(state, config, rng, scale=scale)
        state.alpha0 = alpha0
        if iteration < burn_in:
            step = (float(alpha_accepted) - config.target_acceptance) / (iteration + 1) ** ADAPTATION_DECAY
            scale = float(np.clip(scale * math.exp(step), 1e-3, 10.0))
        else:
            accepted_after_burn_in += int(alpha_accepted)

        state = update_beta(state, config, rng)
        if config.use_likelihood:
            state, occupancy_flags = update_occupancy(state, dataset, rng, priors)
            if iteration >= burn_in:
                occupancy_accepted += sum(occupancy_flags)
        else:
            state = update_weights(state, dataset.sizes, rng, use_counts=False)
        state, z_flags = update_z(state, dataset, config, rng, priors)
        state.validate(dataset.sizes)

        if beliefs is not None:
            state, dataset = _relabel(state, dataset, beliefs, rng)

        log_marginal = total_log_marginal(state, dataset, priors) if config.use_likelihood else 0.0
        logger.debug(
            "sweep %d: alpha0=%.4g accepted=%s clusters=%d log_marginal=%.4f",
            iteration, state.alpha0, alpha_accepted, state.effective_cluster_count(), log_marginal,
        )
        if iteration >= burn_in and (iteration - burn_in) % config.thin == 0:
            trace.append(
                state,
                state.full_labels(dataset.per_attribute_index),
                dataset.labels,
                SweepDiagnostics(iteration, alpha_accepted, z_flags, log_marginal),
            )

    kept = config.iterations - burn_in
    trace.alpha_acceptance_rate = accepted_after_burn_in / kept if kept > 0 else float("nan")
    trace.alpha_proposal_scale = scale
    logger.info(
        "Finished Gibbs chain: %d samples stored, alpha0 acceptance %.3f, occupancy acceptance %.3f",
        len(trace), trace.alpha_acceptance_rate,
        occupancy_accepted / (kept * dataset.r) if kept > 0 else float("nan"),
    )
    return trace


def run_mcem(
    dataset: LabeledDataset,
    config: HfdpConfig,
    rng: Optional[np.random.Generator] = None,
    show_progress: bool = False,
) -> McemResult:
    """Same sweep as run_gibbs with z set to the transport optimum each time.

    Stops after ``config.iterations`` sweeps or once the full assignment has
    been unchanged for ``config.mcem_patience`` consecutive sweeps.
    """

    config.validate(r=dataset.r, d=dataset.d)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    priors = resolve_priors(dataset, config)
    state = initial_state(dataset, config, rng, priors)
    labels = state.full_labels(dataset.per_attribute_index)
    result = McemResult(state=state, assignment=labels)
    unchanged = 0
    scale = config.alpha_proposal_scale

    for iteration in tqdm(range(config.iterations), disable=not show_progress, desc="mcem"):
        alpha0, _ = update_alpha0(state, config, rng, scale=scale)
        state.alpha0 = alpha0
        state = update_beta(state, config, rng)
        state, _ = update_occupancy(state, dataset, rng, priors)
        state = update_z_mode(state, dataset, priors)
        state.validate(dataset.sizes)

        score = total_log_marginal(state, dataset, priors)
        if result.log_marginal and score < result.log_marginal[-1] - 1e-9:
            logger.debug("MC-EM score dipped at sweep %d: %.4f -> %.4f", iteration, result.log_marginal[-1], score)
        result.log_marginal.append(score)

        new_labels = state.full_labels(dataset.per_attribute_index)
        unchanged = unchanged + 1 if np.array_equal(new_labels, labels) else 0
        labels = new_labels
        result.iterations = iteration + 1
        if unchanged >= config.mcem_patience:
            result.converged = True
            break

    result.state = state
    result.assignment = labels
    logger.info(
        "MC-EM stopped after %d sweeps (converged=%s, %d clusters)",
        result.iterations, result.converged, state.effective_cluster_count(),
    )
    return result


def run_chains(
    dataset: LabeledDataset,
    config: HfdpConfig,
    n_chains: int,
    seed: int,
    beliefs: Optional[AttributeBeliefs] = None,
    workers: int = 1,
) -> List[ChainTrace]:
    """Independent repeats of run_gibbs with seeds spawned from ``seed``.

    The traces are returned separately and never pooled into one chain.
    """

    if n_chains < 1:
        raise InvalidInputError("n_chains must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_chains)
    jobs = [(dataset, config, child, beliefs) for child in children]
    if workers <= 1:
        return [_run_chain(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain, jobs))


def _run_chain(job) -> ChainTrace:
    dataset, config, seed_sequence, beliefs = job
    trace = run_gibbs(dataset, config, rng=np.random.default_rng(seed_sequence), beliefs=beliefs)
    trace.seed = int(seed_sequence.entropy)
    return trace


def _relabel(
    state: ChainState,
    dataset: LabeledDataset,
    beliefs: AttributeBeliefs,
    rng: np.random.Generator,
) -> Tuple[ChainState, LabeledDataset]:
    """Redraw the levels and split the current full assignment along the new levels.

    Occupancies are recounted from the carried labels so that the state
    stays consistent; the next occupancy move starts from them.
    """

    labels = state.full_labels(dataset.per_attribute_index)
    relabelled = resample_attributes(dataset, beliefs, rng)
    new_state = state.copy()
    new_state.z = [labels[idx] for idx in relabelled.per_attribute_index]
    new_state.m = np.vstack([np.bincount(z_a, minlength=state.K) for z_a in new_state.z])
    return new_state, relabelled
