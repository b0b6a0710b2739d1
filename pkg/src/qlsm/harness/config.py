"""Experiment configuration: validated JSON round-trippable settings."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..basis import BasisSpec, constant_basis, gbm_basis, hermite_basis, monomial_basis
from ..chain import MarkovChainSpec, discretize_brownian, discretize_gbm
from ..errors import ConfigError
from ..payoff import PayoffSpec, call_payoff, constant_payoff, put_payoff
from ..qsim.ledger import CostWeights

_MODELS = ("brownian", "gbm", "custom-json")
_ALGORITHMS = ("classical", "quantum", "both", "oracle")
_PAYOFFS = ("put", "call", "constant")
_BASES = ("hermite", "gbm", "constant", "monomial")


@dataclass(frozen=True)
class PayoffConfig:
    name: str = "put"
    strike: float = 1.0


@dataclass(frozen=True)
class BasisConfig:
    kind: str = "constant"
    degree: int = 0
    cube_radius: float = 8.0


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "brownian"
    dimension: int = 1
    horizon: int = 3
    grid_size: int = 4
    grid_radius: float = 2.0
    chain_file: str | None = None
    payoff: PayoffConfig = field(default_factory=PayoffConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    algorithm: str = "both"
    epsilon: float = 0.05
    delta: float = 0.1
    sigma_min_lower: float | None = None
    sigma_min_oracle: bool = True
    trials: int = 10
    seed: int = 0
    path_count: int | None = None
    sample_step_cost: float = 1.0
    payoff_query_cost: float = 1.0
    basis_query_cost: float = 1.0

    def validate(self) -> None:
        checks = [
            (self.model in _MODELS, f"model must be one of {_MODELS}, got {self.model!r}"),
            (self.algorithm in _ALGORITHMS,
             f"algorithm must be one of {_ALGORITHMS}, got {self.algorithm!r}"),
            (self.payoff.name in _PAYOFFS,
             f"payoff.name must be one of {_PAYOFFS}, got {self.payoff.name!r}"),
            (self.basis.kind in _BASES,
             f"basis.kind must be one of {_BASES}, got {self.basis.kind!r}"),
            (self.dimension >= 1, "dimension must be at least 1"),
            (self.horizon >= 1, "horizon must be at least 1"),
            (self.grid_size >= 1, "grid_size must be at least 1"),
            (self.grid_radius > 0, "grid_radius must be positive"),
            (self.payoff.strike > 0, "payoff.strike must be positive"),
            (self.basis.degree >= 0, "basis.degree must be non-negative"),
            (self.basis.cube_radius > 0, "basis.cube_radius must be positive"),
            (0 < self.epsilon < 1, "epsilon must lie in (0, 1)"),
            (0 < self.delta < 1, "delta must lie in (0, 1)"),
            (self.trials >= 1, "trials must be at least 1"),
            (self.path_count is None or self.path_count >= 1,
             "path_count must be at least 1 when given"),
            (self.sigma_min_lower is None or self.sigma_min_lower > 0,
             "sigma_min_lower must be positive when given"),
            (self.model != "custom-json" or self.chain_file is not None,
             "custom-json model needs chain_file"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, doc: str | dict) -> "ExperimentConfig":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        known = dict(doc)
        payoff = PayoffConfig(**known.pop("payoff", {}))
        basis = BasisConfig(**known.pop("basis", {}))
        try:
            cfg = cls(payoff=payoff, basis=basis, **known)
        except TypeError as exc:
            raise ConfigError(f"unknown or missing config field: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    # -- builders -----------------------------------------------------------

    def build_chain(self) -> MarkovChainSpec:
        if self.model == "brownian":
            return discretize_brownian(self.dimension, self.horizon,
                                       self.grid_size, self.grid_radius)
        if self.model == "gbm":
            return discretize_gbm(self.dimension, self.horizon,
                                  self.grid_size, self.grid_radius)
        return MarkovChainSpec.from_json(Path(self.chain_file).read_text())

    def build_payoff(self) -> PayoffSpec:
        if self.payoff.name == "put":
            return put_payoff(self.payoff.strike)
        if self.payoff.name == "call":
            return call_payoff(self.payoff.strike)
        return constant_payoff(self.payoff.strike)

    def build_basis(self) -> BasisSpec:
        kind, deg, lam = self.basis.kind, self.basis.degree, self.basis.cube_radius
        if kind == "hermite":
            return hermite_basis(self.dimension, deg, self.horizon, lam)
        if kind == "gbm":
            return gbm_basis(self.dimension, deg, self.horizon, lam)
        if kind == "constant":
            return constant_basis(self.horizon)
        return monomial_basis(self.dimension, deg, self.horizon)

    def cost_weights(self) -> CostWeights:
        return CostWeights(sample_step=self.sample_step_cost,
                           payoff_query=self.payoff_query_cost,
                           basis_query=self.basis_query_cost)
