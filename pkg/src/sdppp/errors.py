"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ParameterError(ValueError):
    """Invalid model or experiment parameter."""


class RangeError(ArithmeticError):
    """A quantity does not fit in the double-precision range."""


class ConvergenceError(RuntimeError):
    """An iterative numerical routine failed to reach its tolerance."""


class PopulationCapError(RuntimeError):
    """A branching simulation exceeded its population cap.

    The partially built forest is attached as ``partial`` so callers can
    inspect it; it is flagged incomplete and must not feed statistics.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
