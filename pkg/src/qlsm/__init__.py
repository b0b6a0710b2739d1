"""Least-squares Monte Carlo for stochastic optimal stopping, with a classical
sampler, a desk-scale simulated quantum estimator, and exact oracles."""

from . import basis, chain, dp, errors, lsm_classical, lsm_quantum, payoff, qsim, \
    stopping_circuits

__all__ = [
    "basis", "chain", "dp", "errors", "lsm_classical", "lsm_quantum",
    "payoff", "qsim", "stopping_circuits",
]

__version__ = "0.1.0"
