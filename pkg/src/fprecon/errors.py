"""Exception hierarchy shared by every fprecon module."""


class FingerprintError(Exception):
    """Base class; the CLI maps any of these to exit code 2."""


class IoFailure(FingerprintError, OSError):
    pass


class MalformedPgm(FingerprintError, ValueError):
    pass


class MalformedTemplate(FingerprintError, ValueError):
    pass


class DimensionMismatch(FingerprintError, ValueError):
    pass


class NotBinary(FingerprintError, ValueError):
    pass


class OutOfBounds(FingerprintError, IndexError):
    pass


class OutOfBoundsMinutia(FingerprintError, ValueError):
    pass


class EmptyTemplate(FingerprintError, ValueError):
    pass


class EmptyForeground(FingerprintError, ValueError):
    pass


class InvalidSpec(FingerprintError, ValueError):
    pass


class EmptyInput(FingerprintError, ValueError):
    pass


class DuplicateRoll(FingerprintError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyRegistry(FingerprintError, LookupError):
    pass
