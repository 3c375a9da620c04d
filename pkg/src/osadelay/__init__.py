"""Delay models of buffering and switching multichannel opportunistic-access MAC protocols."""
from .core import (
    DelayReport,
    DiscretePmf,
    Moments,
    NonConvergenceError,
    ParameterError,
    Protocol,
    SystemParams,
    UndefinedDelayError,
    UnstableQueueError,
    UnsupportedMethodError,
    derive,
)

__version__ = "0.1.0"

__all__ = [
    "DelayReport",
    "DiscretePmf",
    "Moments",
    "NonConvergenceError",
    "ParameterError",
    "Protocol",
    "SystemParams",
    "UndefinedDelayError",
    "UnstableQueueError",
    "UnsupportedMethodError",
    "derive",
]
