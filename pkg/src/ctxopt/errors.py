"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class DegenerateWeightsError(ArithmeticError):
    """All kernel values vanished, so no weight vector can be formed."""

    def __init__(self, message, max_distance=None):
        super().__init__(message)
        self.max_distance = max_distance


class NumericalError(ArithmeticError):
    """An iterative routine failed to converge."""

    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class ConstraintViolationError(ValueError):
    """A supplied point is infeasible for the constraint system it was checked against."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SchemaError(ValueError):
    """A data file does not match the expected column layout."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
