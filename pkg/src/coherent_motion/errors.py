"""Exception types raised by the library."""


class InvalidArgument(ValueError):
    pass


class StabilityError(RuntimeError):
    """Explicit time step too large, or the solution left the admissible set."""


class DegenerateUpdateError(ArithmeticError):
    """Prediction and likelihood have (numerically) no overlap at some node."""
