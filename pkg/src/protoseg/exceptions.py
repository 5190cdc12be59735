"""Exception types raised across the package.

Each maps to one CLI exit code (see :mod:`protoseg.cli`).
"""


class ProtosegError(Exception):
    exit_code = 1


class ConfigError(ProtosegError, ValueError):
    exit_code = 2


class DataError(ProtosegError):
    exit_code = 3


class NumericError(ProtosegError, ArithmeticError):
    exit_code = 4


class ShapeMismatch(DataError, ValueError):
    pass


class FormatError(DataError):
    """Malformed PSEG file. ``offset`` is the byte where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IoError(DataError, OSError):
    pass


class InsufficientClasses(DataError):
    pass


class InsufficientImages(DataError):
    pass


class EmptyClassMask(DataError):
    pass


class EmptyBackground(DataError):
    pass


class NoForeground(DataError):
    pass


class ZeroVector(NumericError):
    pass


class DivergenceWarning(UserWarning):
    """Support loss grew by more than 10x between two refinement iterates."""


class DegenerateFusion(UserWarning):
    """Every fusion weight was zero; the fused mask is all background."""
