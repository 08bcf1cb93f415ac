"""Exception types raised across the package.

Two families matter to callers: :class:`ValidationError` for bad inputs or
violated hypotheses (CLI exit code 2), and :class:`FormatError` for malformed
pattern files (CLI exit code 3).
"""


class NPHError(Exception):
    """Base class for every error raised by ``nph``."""


class ValidationError(NPHError, ValueError):
    pass


class SingleMemory(ValidationError):
    """Quantity needs at least two memories (R, separations)."""


class EmptyVector(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# Shape errors on matrices and dimension errors on vectors are the same thing.
ShapeMismatch = DimensionMismatch


class EnumerationTooLarge(ValidationError):
    pass


class KOutOfRange(ValidationError):
    pass


class PositionOutOfRange(ValidationError):
    pass


class InvalidMask(ValidationError):
    pass


class HypothesisViolated(ValidationError):
    """The preconditions of a guarantee do not hold for the supplied instance."""


class DegenerateRadius(ValidationError):
    """Two memories coincide, so the sphere radius R is zero."""


class OutOfDomain(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class FormatError(NPHError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimensionOverflow(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class CSVParseError(FormatError):
    def __init__(self, message, row):
        super().__init__(f"row {row}: {message}")
        self.row = row
