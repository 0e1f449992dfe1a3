"""Exception hierarchy shared by all dasdetect modules."""


class DasError(Exception):
    """Base class for every error raised by this package."""


class DataError(DasError, ValueError):
    """Invalid input data or model/trace mismatch."""


class FormatError(DataError):
    """Malformed on-disk artifact."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class NumericError(DasError, ArithmeticError):
    """Training diverged or failed to converge."""


class ConvergenceError(NumericError):
    pass


class DivergenceError(NumericError):
    pass
