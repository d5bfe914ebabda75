"""Exception taxonomy shared across the package.

Every failure mode callers are expected to distinguish gets its own class;
all of them derive from CapsRouteError so the CLI can catch one base type.
"""


class CapsRouteError(Exception):
    """Base class for all errors raised by capsroute."""


class ShapeError(CapsRouteError):
    """Tensor dimensions incompatible with the requested operation."""


class NonFiniteError(CapsRouteError):
    """A NaN or Inf appeared where only finite values are allowed."""


class ConfigError(CapsRouteError):
    """Invalid model or training configuration."""


class DataFormatError(CapsRouteError):
    """Base class for binary file format violations."""


class BadMagicError(DataFormatError):
    """File does not start with the expected magic bytes."""


class FormatVersionError(DataFormatError):
    """File format version is not supported."""


class ChecksumError(DataFormatError):
    """Stored checksum does not match the file contents."""


class TruncatedFileError(DataFormatError):
    """File ended before the advertised payload; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class RecordValidationError(DataFormatError):
    """A stored record violates the sample invariants; names the record."""


class ModelKindError(CapsRouteError):
    """Checkpoint holds a different model kind than the caller expects."""


class EmptySplitError(CapsRouteError):
    """A dataset split required to be non-empty is empty."""


class TrainingDivergedError(CapsRouteError):
    """Training produced a non-finite loss or parameter value."""
