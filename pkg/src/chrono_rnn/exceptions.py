class ConfigurationError(ValueError):
    """Invalid shapes, ranges or option combinations."""


class NumericalError(ArithmeticError):
    """A loss or gradient stopped being finite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
