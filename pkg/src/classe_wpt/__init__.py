"""Simulation and design toolkit for a phase-controlled class E rectifier
in a series-compensated wireless power receiver."""

from .circuit import PROTOTYPE, CircuitParams, CoilSource, ReceiverState, SwitchMode
from .errors import (
    ConfigError,
    DegenerateOperatingPoint,
    NoConvergence,
    NonFinite,
    NonFiniteValue,
    NonPositiveValue,
    OutOfRange,
    PhaseOutOfRange,
)
from .simulator import SimConfig, find_steady_state, run_transient, steady_state_at

__all__ = [
    "PROTOTYPE", "CircuitParams", "CoilSource", "ReceiverState", "SwitchMode",
    "ConfigError", "DegenerateOperatingPoint", "NoConvergence", "NonFinite",
    "NonFiniteValue", "NonPositiveValue", "OutOfRange", "PhaseOutOfRange",
    "SimConfig", "find_steady_state", "run_transient", "steady_state_at",
]
