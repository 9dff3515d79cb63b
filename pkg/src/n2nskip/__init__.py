"""Pruning at initialization with neuron-to-neuron skip connections, plus
heat-diffusion connectivity analysis of the resulting sparse MLPs."""

from n2nskip.errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    IncomparableError,
    InfeasibleDensityError,
    N2NSkipError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DimensionError",
    "IncomparableError",
    "InfeasibleDensityError",
    "N2NSkipError",
]
