"""Reversible circuits that solve the stopping-time recursion in superposition
and expose the stopped payoff as a function oracle.

All register updates are XOR writes of values computed in shared fixed-point
arithmetic, so a forward pass followed by the mirrored inverse pass restores
every ancilla to zero bit-exactly."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .basis import BasisSpec
from .chain import MarkovChainSpec
from .errors import QlsmError
from .payoff import PayoffSpec
from .qsim.fixed_point import FixedPointFormat
from .qsim.ledger import QueryLedger
from .qsim.oracles import FunctionOracle, SamplingOracle, sampling_oracle
from .qsim.qmc import QmcVariable
from .qsim.state import HybridState

PAYOFF_QUERY = "payoff"
BASIS_QUERY = "basis"


def _z_register(t: int) -> str:
    return f"payoff[{t}]"


def _score_register(t: int) -> str:
    return f"score[{t}]"


def _tau_register(t: int) -> str:
    return f"stop_time[{t}]"


def product_register(t: int, member: int) -> str:
    return f"stopped_payoff[{t},{member}]"


def _dispatch_payoff_queries(horizon: int) -> int:
    # Select-over-steps circuit cost: horizon * ceil(log2 horizon), floored at
    # one query for the single-step chain.
    return horizon * max(1, math.ceil(math.log2(horizon))) if horizon > 1 else 1


@dataclass(eq=False)
class StoppingCircuits:
    """Circuit family for one chain/payoff/basis triple and loaded coefficients.

    Coefficients are quantized on load; the same rounding routine drives every
    comparison so classical replays of the recursion match bit-exactly.
    """

    chain: MarkovChainSpec
    payoff: PayoffSpec
    basis: BasisSpec
    coefficients: Mapping[int, np.ndarray]
    fmt: FixedPointFormat = field(default_factory=FixedPointFormat)
    sampling: SamplingOracle | None = None

    def __post_init__(self):
        if self.sampling is None:
            self.sampling = sampling_oracle(self.chain)
        self.coefficients = {
            int(t): np.asarray(self.fmt.quantize(np.asarray(c, dtype=float)))
            for t, c in self.coefficients.items()
        }
        self._payoff_path_values: dict[int, np.ndarray] = {}
        self._basis_path_rows: dict[int, np.ndarray] = {}

    # -- shared fixed-point arithmetic ---------------------------------------

    def quantized_payoff(self, t: int) -> np.ndarray:
        """Per-path quantized payoff at step t."""
        vals = self._payoff_path_values.get(t)
        if vals is None:
            grid_vals = self.payoff.values(self.chain, t)
            per_path = grid_vals[self.sampling.ensemble.state_indices_at(t)]
            vals = np.asarray(self.fmt.quantize(per_path))
            self._payoff_path_values[t] = vals
        return vals

    def quantized_basis_rows(self, t: int) -> np.ndarray:
        rows = self._basis_path_rows.get(t)
        if rows is None:
            mat = self.basis.evaluate(t, self.chain.grid(t))
            per_path = mat[self.sampling.ensemble.state_indices_at(t)]
            rows = np.asarray(self.fmt.quantize(per_path))
            self._basis_path_rows[t] = rows
        return rows

    def fixed_dot(self, rows: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Left-to-right multiply-accumulate, quantizing after every op."""
        acc = np.zeros(rows.shape[0])
        for k in range(rows.shape[1]):
            term = np.asarray(self.fmt.quantize(rows[:, k] * coef[k]))
            acc = np.asarray(self.fmt.quantize(acc + term))
        return acc

    def quantized_scores(self, t: int) -> np.ndarray:
        """Per-path quantized score standing in for the continuation value."""
        if t not in self.coefficients:
            raise QlsmError(f"no coefficient vector loaded for step {t}")
        return self.fixed_dot(self.quantized_basis_rows(t), self.coefficients[t])

    # -- circuit applications -------------------------------------------------

    def _bill_step(self, ledger: QueryLedger | None) -> None:
        if ledger is not None:
            ledger.add_function_queries("z", PAYOFF_QUERY, 1)
            ledger.add_function_queries("e", BASIS_QUERY, self.basis.size)

    def step(self, state: HybridState, t: int, ledger: QueryLedger | None = None,
             inverse: bool = False) -> None:
        """Backward stopping-time update: writes (payoff, score, stop-time)
        annotations for step t; the inverse XORs the same values back out."""
        T = self.chain.horizon
        if not 1 <= t <= T:
            raise QlsmError(f"step {t} out of range 1..{T}")
        self._bill_step(ledger)
        if t == T:
            bits = np.full(state.n_basis_states, T, dtype=np.int64)
            state.xor_register(_tau_register(T), bits, None)
            return
        if not state.has_register(_tau_register(t + 1)):
            raise QlsmError(f"stop-time annotation for step {t + 1} is missing")
        z = self.quantized_payoff(t)
        score = self.quantized_scores(t)
        tau_next = state.register_values(_tau_register(t + 1))
        tau_here = np.where(z >= score, t, tau_next).astype(np.int64)
        state.xor_register(_z_register(t), self.fmt.to_bits(z), self.fmt)
        state.xor_register(_score_register(t), self.fmt.to_bits(score), self.fmt)
        state.xor_register(_tau_register(t), tau_here, None)

    def stopped_payoff(self, state: HybridState, t: int, member: int,
                       ledger: QueryLedger | None = None) -> None:
        """Writes payoff-at-stop-time times the step t-1 basis value (1 at t=1)."""
        T = self.chain.horizon
        if not 0 <= member < self.basis.size:
            raise QlsmError(f"basis member {member} out of range 0..{self.basis.size - 1}")
        if not state.has_register(_tau_register(t)):
            raise QlsmError(f"stop-time annotation for step {t} is missing")
        if ledger is not None:
            ledger.add_function_queries("z", PAYOFF_QUERY, _dispatch_payoff_queries(T))
            ledger.add_function_queries("e", BASIS_QUERY, 1)
        tau = state.register_values(_tau_register(t)).astype(np.int64)
        z_at_tau = np.empty(state.n_basis_states)
        for u in np.unique(tau):
            z_at_tau[tau == u] = self.quantized_payoff(int(u))[tau == u]
        if t == 1:
            factor = np.ones(state.n_basis_states)
        else:
            factor = self.quantized_basis_rows(t - 1)[:, member]
        product = np.asarray(self.fmt.quantize(z_at_tau * factor))
        state.xor_register(product_register(t, member), self.fmt.to_bits(product), self.fmt)

    def composed(self, state: HybridState, t: int, member: int,
                 ledger: QueryLedger | None = None, inverse: bool = False) -> None:
        """Full stopped-payoff circuit: backward steps from the horizon down to
        t, the product write, then the mirrored uncompute of every step.

        Every register write is an XOR involution, so the inverse runs the
        identical sequence; it differs only in the ancilla precondition (the
        product register must already hold the value to be cleared)."""
        T = self.chain.horizon
        expected = [product_register(t, member)] if inverse else []
        if state.nonzero_registers() != expected:
            raise QlsmError(f"ancilla registers are dirty: {state.nonzero_registers()}")
        for u in range(T, t - 1, -1):
            self.step(state, u, ledger)
        self.stopped_payoff(state, t, member, ledger)
        for u in range(t, T + 1):
            self.step(state, u, ledger, inverse=True)

    def composed_cost(self, t: int) -> dict[str, int]:
        """Exact query counts of one composed application at time t."""
        T = self.chain.horizon
        chain_steps = T - t + 1
        return {
            PAYOFF_QUERY: 2 * chain_steps + _dispatch_payoff_queries(T),
            BASIS_QUERY: 2 * chain_steps * self.basis.size + 1,
        }

    # -- estimation hooks ------------------------------------------------------

    def stopped_payoff_values(self, t: int, member: int) -> np.ndarray:
        """Per-path value left in the product register by one composed run."""
        state = HybridState.prepared(self.sampling.ensemble)
        self.composed(state, t, member)
        values = state.register_values(product_register(t, member))
        leftovers = [r for r in state.nonzero_registers()
                     if r != product_register(t, member)]
        if leftovers:
            raise QlsmError(f"uncompute left dirty registers: {leftovers}")
        return np.asarray(values, dtype=float)

    def variable(self, t: int, member: int) -> QmcVariable:
        """The stopped-payoff product as an estimable random variable whose
        oracle bills one composed-circuit application per query."""
        values = self.stopped_payoff_values(t, member)
        oracle = FunctionOracle(
            name=f"stopped_payoff[t={t},m={member}]", fmt=self.fmt,
            raw_values=values, query_cost=self.composed_cost(t))
        return QmcVariable(sampling=self.sampling, oracle=oracle)

    def classical_stop_times(self, t: int) -> np.ndarray:
        """Per-path stop times from the same recursion run forward classically."""
        T = self.chain.horizon
        tau = np.full(len(self.sampling.ensemble), T, dtype=np.int64)
        for u in range(T - 1, t - 1, -1):
            stop_here = self.quantized_payoff(u) >= self.quantized_scores(u)
            tau = np.where(stop_here, u, tau)
        return tau
