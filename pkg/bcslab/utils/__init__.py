from .config import Config
from .errors import (
    BcsLabError,
    BracketError,
    DegenerateFitError,
    DegenerateGapError,
    ExtrapolationError,
    FamilyViolationError,
    InternalError,
    InvalidArgumentError,
    InvalidStateError,
    NumericalError,
    SingularReferenceError,
)
from .rng import make_rng

__all__ = [
    'Config', 'make_rng',
    'BcsLabError', 'BracketError', 'DegenerateFitError', 'DegenerateGapError',
    'ExtrapolationError', 'FamilyViolationError', 'InternalError',
    'InvalidArgumentError', 'InvalidStateError', 'NumericalError',
    'SingularReferenceError',
]
