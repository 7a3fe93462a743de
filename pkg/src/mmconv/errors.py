"""Exception hierarchy shared by all modules."""


class MMError(Exception):
    """Base class for library errors."""


class ValidationError(MMError, ValueError):
    """Malformed input: invalid metric, bad configuration, wrong shapes."""


class SizeLimitExceeded(MMError):
    """A brute-force or enumeration bound would be exceeded."""


class DimensionMismatch(ValidationError):
    pass


class EmptySupport(MMError):
    pass


class EmptySet(ValidationError):
    pass


class NotTransient(ValidationError):
    pass


class InvalidPairing(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class InsufficientSteps(MMError):
    pass


class HorizonTooShort(MMError):
    pass
