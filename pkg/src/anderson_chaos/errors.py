"""Exception hierarchy shared by all modules."""


class AndersonError(Exception):
    """Base class for every error raised by the package."""


class UnsupportedConfigurationError(AndersonError):
    pass


class DomainError(AndersonError, ValueError):
    pass


class PreconditionError(AndersonError, ValueError):
    pass


class NumericDegeneracyError(AndersonError, ArithmeticError):
    pass


class ResourceError(AndersonError, MemoryError):
    pass


class AccuracyError(AndersonError, ArithmeticError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class ResolutionError(AndersonError, ValueError):
    pass
