"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operands or parameters with incompatible shapes."""


class TrackValidationError(ValueError):
    """A storm-track file or array violates the track schema.

    Carries the offending row index and column name when they are known.
    """

    def __init__(self, message, row=None, column=None):
        parts = [message]
        if row is not None:
            parts.append(f"row {row}")
        if column is not None:
            parts.append(f"column {column!r}")
        super().__init__(" | ".join(parts))
        self.row = row
        self.column = column


class ColumnSchemaError(TrackValidationError):
    """Header or field layout does not match the 16-column track schema."""


class RowCountError(TrackValidationError):
    """Track does not have exactly the expected number of rows."""


class TauGridError(TrackValidationError):
    """Time column is not the fixed 30-minute countdown grid."""


class NonFiniteValueError(TrackValidationError):
    """A cell is NaN, infinite, or not parsable as a finite number."""


class FieldRangeError(TrackValidationError):
    """A physical field is outside its admissible range."""


class CheckpointError(Exception):
    """Base for checkpoint serialization problems."""


class CheckpointFormatError(CheckpointError):
    """Checkpoint file is unparsable or structurally malformed."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written with an unsupported format version."""

    def __init__(self, found, expected):
        super().__init__(
            f"checkpoint has format_version {found!r}, this build reads {expected}")
        self.found = found
        self.expected = expected


class CheckpointDimensionError(CheckpointError):
    """Stored arrays disagree with the declared architecture."""


class ConfigError(ValueError):
    """Run configuration file or flags are invalid."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""
