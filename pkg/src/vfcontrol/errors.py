class InvalidInputError(ValueError):
    """Bad shapes, non-finite values or missing configuration."""


class NumericalFailure(ArithmeticError):
    """A linear solve or integration stage produced a non-SPD matrix or NaN/Inf."""
