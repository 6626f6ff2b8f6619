"""Run configuration and the packaged catalogs of simulation designs and benchmark recipes."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import InvalidInputError
from .schema import HfdpConfig, NiwParams

logger = logging.getLogger(__name__)

DESIGNS_PATH = Path(__file__).parent / "designs.json"
BENCHMARKS_PATH = Path(__file__).parent / "benchmarks.json"
FAMILIES = ("normal", "t", "skew_normal", "prior")
MODES = ("gibbs", "mcem")


@dataclass
class GeneratorSpec:
    """Parameters of one synthetic design.

    ``means`` is indexed [level][cluster] and ``occupancy`` (optional) fixes
    the per-level cluster counts; without it the counts are drawn from the
    HFDP prior with (g, b).
    """

    name: str
    family: str
    sizes: List[int]
    K_true: int
    means: Optional[List[List[List[float]]]] = None
    scale: float = 3.0
    rho: float = 0.3
    df: float = 4.0
    skewness: Optional[List[float]] = None
    g: float = 10.0
    b: float = 1.0
    p_acc: Optional[float] = None
    occupancy: Optional[List[List[int]]] = None
    niw: Optional[NiwParams] = None
    fit_K: Optional[int] = None
    description: str = ""

    @property
    def r(self) -> int:
        return len(self.sizes)

    @property
    def d(self) -> int:
        if self.means is not None:
            return len(self.means[0][0])
        return self.niw.d

    @property
    def scale_matrix(self) -> np.ndarray:
        """S = scale * [rho 11' + (1 - rho) I]."""
        d = self.d
        return self.scale * (self.rho * np.ones((d, d)) + (1.0 - self.rho) * np.eye(d))

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown component family {self.family!r}; expected one of {FAMILIES}")
        if self.r < 1 or any(int(n) < 1 for n in self.sizes):
            raise InvalidInputError("every level needs a positive size")
        if self.K_true < 1:
            raise InvalidInputError("K_true must be positive")
        if self.family == "prior":
            if self.niw is None:
                raise InvalidInputError("the prior design needs NIW hyperparameters")
            self.niw.validate()
        else:
            means = np.asarray(self.means, dtype=float) if self.means is not None else None
            if means is None or means.ndim != 3 or means.shape[:2] != (self.r, self.K_true):
                raise InvalidInputError(f"means must be shaped [{self.r}][{self.K_true}][d]")
        if not -1.0 / max(self.d - 1, 1) < self.rho < 1.0:
            raise InvalidInputError(f"rho={self.rho} does not give a positive definite scale")
        if self.scale <= 0 or self.df <= 0:
            raise InvalidInputError("scale and df must be positive")
        if self.family == "skew_normal" and (self.skewness is None or len(self.skewness) != self.d):
            raise InvalidInputError("skew_normal needs one skewness entry per dimension")
        if self.p_acc is not None and not 0.0 <= self.p_acc <= 1.0:
            raise InvalidInputError("p_acc must lie in [0, 1]")
        if self.occupancy is not None:
            counts = np.asarray(self.occupancy)
            if counts.shape != (self.r, self.K_true) or np.any(counts < 0):
                raise InvalidInputError("occupancy must be a nonnegative r x K_true table")
            if not np.array_equal(counts.sum(axis=1), np.asarray(self.sizes)):
                raise InvalidInputError("occupancy rows must sum to the level sizes")
        if not (self.g > 0 and self.b > 0):
            raise InvalidInputError("g and b must be positive")

    def with_overrides(self, **changes) -> "GeneratorSpec":
        spec = replace(self, **{k: v for k, v in changes.items() if v is not None})
        spec.validate()
        return spec

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown design keys: {sorted(unknown)}")
        values = dict(data)
        if values.get("niw") is not None:
            values["niw"] = NiwParams.from_dict(values["niw"])
        values["sizes"] = [int(n) for n in values.get("sizes", [])]
        spec = cls(**values)
        spec.validate()
        return spec


@dataclass
class BenchmarkRecipe:
    """How to load one of the public tabular benchmarks, plus the figures reported for it."""

    name: str
    file_hint: str
    feature_columns: List[str]
    attribute_column: str
    target_balance: float
    reported_fair_score: Optional[float] = None
    reported_balance: Optional[float] = None
    notes: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkRecipe":
        return cls(
            name=str(data["name"]),
            file_hint=str(data.get("file_hint", "")),
            feature_columns=[str(c) for c in data["feature_columns"]],
            attribute_column=str(data["attribute_column"]),
            target_balance=float(data["target_balance"]),
            reported_fair_score=data.get("reported_fair_score"),
            reported_balance=data.get("reported_balance"),
            notes=str(data.get("notes", "")),
        )


@dataclass
class RunConfig:
    """Everything one CLI invocation needs besides the command name."""

    seed: int
    hfdp: HfdpConfig = field(default_factory=HfdpConfig)
    mode: str = "gibbs"
    input_path: Optional[str] = None
    design: Optional[str] = None
    feature_columns: Optional[List[str]] = None
    attribute_column: str = "attribute"
    level_order: Optional[List[str]] = None
    benchmark: Optional[str] = None
    out_dir: str = "out"
    n_chains: int = 1
    workers: int = 1
    show_progress: bool = False

    def validate(self, require_data: bool = True) -> None:
        if self.seed is None:
            raise InvalidInputError("a seed is required")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if require_data and (self.input_path is None) == (self.design is None):
            raise InvalidInputError("give exactly one of an input file or a design")
        if self.n_chains < 1 or self.workers < 1:
            raise InvalidInputError("n_chains and workers must be >= 1")
        self.hfdp.validate()

    def to_dict(self) -> dict:
        data = asdict(self)
        data["hfdp"] = self.hfdp.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown run configuration keys: {sorted(unknown)}")
        values = dict(data)
        values["hfdp"] = HfdpConfig.from_dict(values.get("hfdp") or {})
        if "seed" not in values:
            raise InvalidInputError("a seed is required")
        return cls(**values)


def load_run_config(path: str | Path) -> dict:
    """Read a JSON configuration file; the CLI overlays its flags on the result."""

    return _read_json(Path(path), "configuration")


def load_designs(path: str | Path = DESIGNS_PATH) -> Dict[str, GeneratorSpec]:
    """Load the design catalog (root key: 'designs')."""

    payload = _read_json(Path(path), "design catalog")
    designs = {item["name"]: GeneratorSpec.from_dict(item) for item in payload.get("designs", [])}
    logger.debug("Design catalog loaded from %s with %d designs", path, len(designs))
    return designs


def get_design(tag: str, path: str | Path = DESIGNS_PATH) -> GeneratorSpec:
    designs = load_designs(path)
    if tag not in designs:
        raise InvalidInputError(f"unknown design {tag!r}; available: {sorted(designs)}")
    return designs[tag]


def load_benchmarks(path: str | Path = BENCHMARKS_PATH) -> Dict[str, BenchmarkRecipe]:
    """Load the benchmark recipes (root key: 'benchmarks')."""

    payload = _read_json(Path(path), "benchmark catalog")
    return {item["name"]: BenchmarkRecipe.from_dict(item) for item in payload.get("benchmarks", [])}


def _read_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("Could not read %s at %s: %s", what, path, exc)
        raise InvalidInputError(f"could not read {what} at {path}") from exc
