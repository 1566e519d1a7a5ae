"""Exception hierarchy shared by every module of the package."""


class CarnotError(Exception):
    """Base class for all package errors."""


class ShapeError(CarnotError, ValueError):
    """A point or parameter vector has the wrong length."""


class DomainError(CarnotError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedStepError(CarnotError, ValueError):
    """The group step is not supported by the requested operation."""


class ConvergenceError(CarnotError, RuntimeError):
    """An iterative search did not terminate within its budget."""


class HypothesisViolatedError(CarnotError, ValueError):
    """A construction was asked to run outside the regime where it exists."""


class ConsistencyError(CarnotError, ValueError):
    """Two objects that must describe the same geometry disagree."""


class DegenerateBracketError(CarnotError, ValueError):
    """The requested pair of generators commutes."""
