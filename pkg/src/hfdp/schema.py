"""Schemas for model configuration, chain states and the reports built from them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InternalConsistencyError, InvalidInputError

SIMPLEX_TOL = 1e-10
QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class NiwParams:
    """Normal-Inverse-Wishart hyperparameters (mu0, lambda0, Lambda0, nu0)."""

    mu0: np.ndarray
    lambda0: float
    Lambda0: np.ndarray
    nu0: float

    def __post_init__(self) -> None:
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        self.Lambda0 = np.atleast_2d(np.asarray(self.Lambda0, dtype=float))
        self.lambda0 = float(self.lambda0)
        self.nu0 = float(self.nu0)

    @property
    def d(self) -> int:
        return int(self.mu0.shape[0])

    def validate(self) -> None:
        """Raise InvalidInputError unless the quadruple defines a proper NIW law."""

        d = self.d
        if self.Lambda0.shape != (d, d):
            raise InvalidInputError(f"Lambda0 must be {d}x{d}, got {self.Lambda0.shape}")
        if not self.lambda0 > 0:
            raise InvalidInputError(f"lambda0 must be positive, got {self.lambda0}")
        if not self.nu0 > d - 1:
            raise InvalidInputError(f"nu0 must exceed d - 1 = {d - 1}, got {self.nu0}")
        if not np.allclose(self.Lambda0, self.Lambda0.T):
            raise InvalidInputError("Lambda0 must be symmetric")
        try:
            np.linalg.cholesky(self.Lambda0)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("Lambda0 must be positive definite") from exc

    def to_dict(self) -> dict:
        return {
            "mu0": self.mu0.tolist(),
            "lambda0": self.lambda0,
            "Lambda0": self.Lambda0.tolist(),
            "nu0": self.nu0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NiwParams":
        return cls(
            mu0=data["mu0"],
            lambda0=data["lambda0"],
            Lambda0=data["Lambda0"],
            nu0=data["nu0"],
        )


@dataclass
class HfdpConfig:
    """Hyperparameters of the HFDP prior plus the controls of one Markov chain."""

    K: int = 10
    g: float = 1.0
    b: float = 1.0
    epsilon: float = 0.05
    niw: Optional[List[NiwParams]] = None
    iterations: int = 1000
    burn_in: Optional[int] = None  # None -> half of the iterations
    thin: int = 5
    seed: int = 0
    wrla_steps: Optional[int] = None  # None -> 50 * N_a per attribute
    alpha_proposal_scale: float = 0.5
    target_acceptance: float = 0.4
    strict_z_move: bool = False
    use_likelihood: bool = True
    mcem_patience: int = 5

    def validate(self, r: Optional[int] = None, d: Optional[int] = None) -> None:
        """Raise InvalidInputError when a field is out of range."""

        if int(self.K) != self.K or self.K < 2:
            raise InvalidInputError(f"K must be an integer >= 2, got {self.K}")
        if not self.g > 0:
            raise InvalidInputError(f"g must be positive, got {self.g}")
        if not self.b > 0:
            raise InvalidInputError(f"b must be positive, got {self.b}")
        if not self.epsilon >= 0:
            raise InvalidInputError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be nonnegative")
        if self.burn_in is not None and not 0 <= self.burn_in <= self.iterations:
            raise InvalidInputError("burn_in must lie between 0 and iterations")
        if self.thin < 1:
            raise InvalidInputError("thin must be >= 1")
        if self.wrla_steps is not None and self.wrla_steps < 0:
            raise InvalidInputError("wrla_steps must be nonnegative")
        if not self.alpha_proposal_scale > 0:
            raise InvalidInputError("alpha_proposal_scale must be positive")
        if not 0 < self.target_acceptance < 1:
            raise InvalidInputError("target_acceptance must lie in (0, 1)")
        if self.mcem_patience < 1:
            raise InvalidInputError("mcem_patience must be >= 1")
        if self.niw is not None:
            if r is not None and len(self.niw) != r:
                raise InvalidInputError(f"expected {r} NIW priors (one per level), got {len(self.niw)}")
            for prior in self.niw:
                prior.validate()
                if d is not None and prior.d != d:
                    raise InvalidInputError(f"NIW prior has dimension {prior.d}, data has {d}")

    @property
    def effective_burn_in(self) -> int:
        return self.iterations // 2 if self.burn_in is None else self.burn_in

    def wrla_steps_for(self, n_a: int) -> int:
        return 50 * n_a if self.wrla_steps is None else self.wrla_steps

    def to_dict(self) -> dict:
        data = asdict(self)
        data["niw"] = None if self.niw is None else [p.to_dict() for p in self.niw]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "HfdpConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown configuration keys: {sorted(unknown)}")
        values = dict(data)
        if values.get("niw") is not None:
            values["niw"] = [NiwParams.from_dict(p) for p in values["niw"]]
        return cls(**values)


@dataclass
class ChainState:
    """One state of the Markov chain: (alpha0, beta, w, m, z) and the auxiliary t."""

    alpha0: float
    beta: np.ndarray
    w: np.ndarray
    m: np.ndarray
    z: List[np.ndarray]
    t: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return int(self.beta.shape[0])

    @property
    def r(self) -> int:
        return int(self.w.shape[0])

    def copy(self) -> "ChainState":
        return ChainState(
            alpha0=float(self.alpha0),
            beta=self.beta.copy(),
            w=self.w.copy(),
            m=self.m.copy(),
            z=[labels.copy() for labels in self.z],
            t=None if self.t is None else self.t.copy(),
        )

    def validate(self, sizes: Optional[Sequence[int]] = None) -> None:
        """Raise InternalConsistencyError if any ChainState invariant fails."""

        if not (np.isfinite(self.alpha0) and self.alpha0 > 0):
            raise InternalConsistencyError(f"alpha0 must be positive and finite, got {self.alpha0}")
        if abs(self.beta.sum() - 1.0) > SIMPLEX_TOL or np.any(self.beta < 0):
            raise InternalConsistencyError("beta left the simplex")
        if self.w.shape != (self.r, self.K) or self.m.shape != (self.r, self.K):
            raise InternalConsistencyError("w and m must be r x K")
        if np.any(np.abs(self.w.sum(axis=1) - 1.0) > SIMPLEX_TOL) or np.any(self.w < 0):
            raise InternalConsistencyError("a row of w left the simplex")
        if np.any(self.m < 0):
            raise InternalConsistencyError("negative occupancy")
        if len(self.z) != self.r:
            raise InternalConsistencyError("z must hold one label vector per level")
        for a, labels in enumerate(self.z):
            if sizes is not None and self.m[a].sum() != sizes[a]:
                raise InternalConsistencyError(f"occupancy of level {a} does not sum to N_a")
            if labels.size and (labels.min() < 0 or labels.max() >= self.K):
                raise InternalConsistencyError(f"labels of level {a} outside 0..K-1")
            counts = np.bincount(labels, minlength=self.K)
            if not np.array_equal(counts, self.m[a]):
                raise InternalConsistencyError(f"labels of level {a} disagree with occupancy m")

    def effective_cluster_count(self) -> int:
        """Number of clusters used by at least one level."""
        return int(np.count_nonzero(self.m.sum(axis=0)))

    def full_labels(self, per_attribute_index: Sequence[np.ndarray]) -> np.ndarray:
        """Scatter the per-level label vectors back into dataset row order."""

        n = int(sum(len(idx) for idx in per_attribute_index))
        labels = np.empty(n, dtype=np.int64)
        for idx, z_a in zip(per_attribute_index, self.z):
            labels[idx] = z_a
        return labels


@dataclass
class SweepDiagnostics:
    """Per-sweep record stored alongside each retained sample."""

    iteration: int
    alpha_accepted: bool
    z_accepted: Tuple[bool, ...]
    log_marginal: float


@dataclass
class ChainTrace:
    """Post-burn-in thinned samples of one chain and their diagnostics."""

    states: List[ChainState] = field(default_factory=list)
    assignments: List[np.ndarray] = field(default_factory=list)
    attributes: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[SweepDiagnostics] = field(default_factory=list)
    alpha_acceptance_rate: float = float("nan")
    alpha_proposal_scale: float = float("nan")
    seed: Optional[int] = None

    def append(
        self,
        state: ChainState,
        assignment: np.ndarray,
        attributes: np.ndarray,
        diagnostics: SweepDiagnostics,
    ) -> None:
        self.states.append(state.copy())
        self.assignments.append(np.array(assignment, dtype=np.int64))
        self.attributes.append(np.array(attributes, dtype=np.int64))
        self.diagnostics.append(diagnostics)

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class FairnessReport:
    """Balance, the independence pivot, the epsilon verdict and the fair-score of one clustering."""

    per_cluster_balance: np.ndarray
    overall_balance: float
    mi: float
    epsilon: float
    epsilon_ok: bool
    fair_score: float

    def to_dict(self) -> dict:
        return {
            "per_cluster_balance": [json_float(v) for v in self.per_cluster_balance],
            "overall_balance": json_float(self.overall_balance),
            "mi": json_float(self.mi),
            "epsilon": self.epsilon,
            "epsilon_ok": bool(self.epsilon_ok),
            "fair_score": json_float(self.fair_score),
        }


@dataclass
class CalibrationRow:
    """Prior quantiles of balance and KL(w1 || w2) for one (g, b) pair."""

    g: float
    b: float
    K: int
    balance_quantiles: Dict[float, float]
    kl_quantiles: Dict[float, float]
    n_draws: int


@dataclass
class CalibrationSummary:
    rows: List[CalibrationRow] = field(default_factory=list)


@dataclass
class PosteriorSummary:
    """What `fit` reports about one chain."""

    dahl_index: int
    dahl_assignment: np.ndarray
    map_index: Optional[int]
    map_assignment: Optional[np.ndarray]
    map_score: float
    cluster_count_posterior: Dict[int, float]
    modal_cluster_count: int
    dahl_report: FairnessReport

    def to_dict(self) -> dict:
        return {
            "dahl_index": self.dahl_index,
            "map_index": self.map_index,
            "map_score": json_float(self.map_score),
            "cluster_count_posterior": {str(k): v for k, v in self.cluster_count_posterior.items()},
            "modal_cluster_count": self.modal_cluster_count,
            "dahl_report": self.dahl_report.to_dict(),
        }


def json_float(value: float):
    """Serialize non-finite floats as strings so the JSON stays standard."""

    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value
