"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class DomainError(ValueError):
    """Input lies outside an operation's domain (zero norm, empty sentence, ...)."""


class NumericalError(FloatingPointError):
    """A non-finite value appeared in the training stream."""


class UndefinedCorrelation(ValueError):
    """Rank correlation requested on a constant input."""


class DataError(ValueError):
    """Malformed corpus, teacher table or config file."""
