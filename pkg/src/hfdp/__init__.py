"""Bayesian fair clustering with the hierarchical fair Dirichlet process (HFDP)."""

from .dataset import AttributeBeliefs, LabeledDataset
from .errors import (
    CapacityError,
    DataFormatError,
    HfdpError,
    InternalConsistencyError,
    InvalidInputError,
    NumericalDegeneracyError,
)
from .metrics import balance, fair_score, fairness_report, mi_pivot
from .sampler import run_chains, run_gibbs, run_mcem
from .schema import ChainState, ChainTrace, HfdpConfig, NiwParams

__all__ = [
    "AttributeBeliefs",
    "CapacityError",
    "ChainState",
    "ChainTrace",
    "DataFormatError",
    "HfdpConfig",
    "HfdpError",
    "InternalConsistencyError",
    "InvalidInputError",
    "LabeledDataset",
    "NiwParams",
    "NumericalDegeneracyError",
    "balance",
    "fair_score",
    "fairness_report",
    "mi_pivot",
    "run_chains",
    "run_gibbs",
    "run_mcem",
]
