"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad parameters or inputs outside the documented domain."""


class NumericError(ArithmeticError):
    """A numerical routine could not reach its accuracy target."""


class EmbeddingError(NumericError):
    """Circulant embedding produced an inadmissible negative eigenvalue."""
