"""Experiment harness: configuration, drivers and the command line."""
from .config import BasisConfig, ExperimentConfig, PayoffConfig
from .experiments import (ExperimentReport, dump_oracle, run_price, run_scaling,
                          validate_bounds)

__all__ = [
    "BasisConfig", "ExperimentConfig", "PayoffConfig", "ExperimentReport",
    "dump_oracle", "run_price", "run_scaling", "validate_bounds",
]
