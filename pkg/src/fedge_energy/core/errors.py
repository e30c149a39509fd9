"""
Error types raised by fedge_energy

Each error subclasses the builtin a caller would naturally catch, so
``except ValueError`` keeps working around scenario loading and solver calls.
"""


class InvalidInputError(ValueError):
    """Raised for out-of-range or malformed inputs (scenario fields, units, shapes)."""


class BracketError(ValueError):
    """Raised when a bisection interval does not bracket a sign change."""


class SizeError(ValueError):
    """Raised when an exhaustive computation would be too large to run."""


class DualInfeasibleError(ValueError):
    """Raised when a dual point lies outside the domain where the dual function is finite."""


class NumericalDomainError(ArithmeticError):
    """Raised when a numerical kernel meets a non-finite value."""


class DivergenceError(ArithmeticError):
    """Raised when federated training produces non-finite parameters."""
