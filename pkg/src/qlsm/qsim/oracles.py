"""Oracle objects: chain state preparation, reversible function queries, and
interval-conditioned controlled rotations."""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from ..chain import DEFAULT_ENUMERATION_CAP, MarkovChainSpec, PathEnsemble, enumerate_paths
from ..errors import Overflow
from .fixed_point import FixedPointFormat
from .ledger import QueryLedger
from .state import HybridState


@dataclass(eq=False)
class SamplingOracle:
    """Prepares the path superposition; one application bills one preparation
    (cost model: horizon sampling steps)."""

    chain: MarkovChainSpec
    ensemble: PathEnsemble

    def prepare(self, ledger: QueryLedger | None = None) -> HybridState:
        if ledger is not None:
            ledger.add_state_preparations(1)
        return HybridState.prepared(self.ensemble)

    def measure(self, count: int, rng: np.random.Generator,
                ledger: QueryLedger | None = None) -> np.ndarray:
        """Computational-basis samples of prepared states; one prep per shot."""
        if ledger is not None:
            ledger.add_state_preparations(count)
        probs = self.ensemble.probabilities
        cum = np.cumsum(probs)
        cum = cum / cum[-1]
        draws = np.searchsorted(cum, rng.random(count), side="right")
        return np.clip(draws, 0, len(self.ensemble) - 1)


def sampling_oracle(chain: MarkovChainSpec,
                    cap: int = DEFAULT_ENUMERATION_CAP) -> SamplingOracle:
    return SamplingOracle(chain=chain, ensemble=enumerate_paths(chain, cap))


@dataclass(eq=False)
class FunctionOracle:
    """Reversible XOR-write of a per-path function value at fixed precision.

    query_cost describes what one application bills, as {kind: count} with
    kinds "payoff"/"basis" (weighted later) or an explicit name.
    """

    name: str
    fmt: FixedPointFormat
    raw_values: np.ndarray
    query_cost: dict = field(default_factory=dict)

    def __post_init__(self):
        self.raw_values = np.asarray(self.raw_values, dtype=float)
        bad = np.abs(self.raw_values) > self.fmt.max_value
        if np.any(bad):
            idx = np.nonzero(bad)[0][:8]
            raise Overflow(
                f"function '{self.name}' not representable at "
                f"({self.fmt.int_bits},{self.fmt.frac_bits}); offending path "
                f"indices {idx.tolist()} values {self.raw_values[idx].tolist()}"
            )
        self.values = np.asarray(self.fmt.quantize(self.raw_values))
        self.bits = self.fmt.to_bits(self.values)

    def bill(self, ledger: QueryLedger | None, applications: int = 1) -> None:
        if ledger is None:
            return
        # Composite circuits bill several query kinds; keep one counter per
        # (oracle, kind) so the per-kind totals stay separable.
        for kind, count in self.query_cost.items():
            name = self.name if len(self.query_cost) == 1 else f"{self.name}/{kind}"
            ledger.add_function_queries(name, kind, count * applications)

    def apply(self, state: HybridState, register: str,
              ledger: QueryLedger | None = None) -> None:
        """XOR the value image into the register; self-inverse."""
        state.xor_register(register, self.bits, self.fmt)
        self.bill(ledger)


def function_oracle(name: str, values: np.ndarray, fmt: FixedPointFormat,
                    kind: str = "payoff", queries_per_application: int = 1) -> FunctionOracle:
    return FunctionOracle(name=name, fmt=fmt, raw_values=values,
                          query_cost={kind: queries_per_application})


def grid_function_oracle(name: str, chain: MarkovChainSpec, ensemble: PathEnsemble,
                         step: int, grid_values: np.ndarray, fmt: FixedPointFormat,
                         kind: str) -> FunctionOracle:
    """Oracle for a per-grid-point function read along each path at one step."""
    per_path = np.asarray(grid_values, dtype=float)[ensemble.state_indices_at(step)]
    return function_oracle(name, per_path, fmt, kind=kind)


@dataclass(eq=False)
class ControlledRotation:
    """Rotates the flag qubit by value/high for paths whose oracle value lies
    in [low, high]; leaves it at |0> otherwise. One application embeds two
    oracle queries."""

    oracle: FunctionOracle
    low: float
    high: float

    def __post_init__(self):
        fmt = self.oracle.fmt
        self.low = float(np.asarray(fmt.quantize(self.low)))
        self.high = float(np.asarray(fmt.quantize(self.high)))
        if not 0.0 <= self.low < self.high:
            raise ValueError(f"need 0 <= low < high, got [{self.low}, {self.high}]")

    def in_interval(self) -> np.ndarray:
        v = self.oracle.values
        return (v >= self.low) & (v <= self.high)

    def good_amplitude_squared(self, probabilities: np.ndarray) -> float:
        """Exact flagged weight sum p(x) * value(x)/high over the interval."""
        mask = self.in_interval()
        return float(np.sum(probabilities[mask] * self.oracle.values[mask] / self.high))

    def apply(self, state: HybridState, ledger: QueryLedger | None = None) -> None:
        mask = self.in_interval()
        ratio = np.where(mask, self.oracle.values / self.high, 0.0)
        ratio = np.clip(ratio, 0.0, 1.0)
        state.set_rotation(np.sqrt(1.0 - ratio), np.sqrt(ratio))
        if ledger is not None:
            ledger.add_rotations(1)
        self.oracle.bill(ledger, applications=2)


def controlled_rotation(oracle: FunctionOracle, low: float, high: float) -> ControlledRotation:
    return ControlledRotation(oracle=oracle, low=low, high=high)
