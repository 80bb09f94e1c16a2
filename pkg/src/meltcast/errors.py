class ConfigurationError(ValueError):
    """Inputs, schemas or settings that cannot work together."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientDataError(ValueError):
    pass
