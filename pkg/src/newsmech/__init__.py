"""Mechanism design for agents with news utility over good and money."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConvergenceError,
    DomainError,
    ICViolationError,
    InfeasibleError,
    NewsMechError,
    RegularityError,
    UnsupportedInstanceError,
    ValidationError,
)
from .newsutil import DiscreteDistribution, GainLossSpec  # noqa: F401
