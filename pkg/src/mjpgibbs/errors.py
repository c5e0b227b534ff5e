class MJPError(Exception):
    """Base class for errors raised by mjpgibbs."""


class ModelError(MJPError, ValueError):
    """Invalid model, parameters or data."""


class ImpossibleObservationsError(ModelError):
    """The observations have zero probability under the model."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(MJPError, ArithmeticError):
    """A numerical routine failed its own accuracy check."""
