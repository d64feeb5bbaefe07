"""Exception hierarchy shared by every bcslab module."""


class BcsLabError(Exception):
    """Base class for all bcslab errors"""


class InvalidArgumentError(BcsLabError, ValueError):
    """Argument outside the documented domain of an operation"""


class BracketError(BcsLabError):
    """Root bracket without a sign change"""


class NumericalError(BcsLabError, ArithmeticError):
    """NaN, overflow or an iteration that failed to converge"""


class InvalidStateError(BcsLabError):
    """State violating 0 <= Gamma <= 1 or its block pattern"""


class SingularReferenceError(BcsLabError):
    """Reference state with an eigenvalue at 0 or 1"""


class ExtrapolationError(BcsLabError, ValueError):
    """Profile evaluated outside its sampled momentum range"""


class DegenerateFitError(BcsLabError):
    """Log-log fit requested on vanishing data"""


class DegenerateGapError(BcsLabError):
    """Pair profile with vanishing norm"""


class FamilyViolationError(BcsLabError):
    """State family member with positive free-energy difference"""


class InternalError(BcsLabError):
    """Discretization defect that should be impossible by construction"""


USAGE_ERRORS = (InvalidArgumentError, ExtrapolationError)
