"""Exception hierarchy shared by all stages."""


class StxError(Exception):
    """Base class for every error raised by stextremes."""


class DomainError(StxError, ValueError):
    """An argument lies outside the domain of an operation."""


class ValidationError(StxError, ValueError):
    """Input data violates a structural invariant (axes, shapes, headers)."""


class FormatError(ValidationError):
    """A serialized grid does not follow the container layout."""


class CorruptionError(ValidationError):
    """Declared dimensions disagree with the payload length."""


class ConfigError(StxError):
    """Pipeline configuration is invalid."""


class NumericalError(StxError):
    """A numerical stage could not produce a result (e.g. empty pool)."""
