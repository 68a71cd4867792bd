"""Exception hierarchy shared across the package."""


class PvBoostError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PvBoostError):
    """CSV header does not match the canonical column schema."""


class RowParseError(PvBoostError):
    """A data row could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateTimestampError(PvBoostError):
    """Two records share the same timestamp."""


class EmptyDatasetError(PvBoostError):
    """No usable records remain."""


class DegenerateLeafError(PvBoostError):
    """Leaf weight or split gain requested with a non-positive denominator."""


class UndefinedVarianceError(PvBoostError):
    """R-squared requested on labels with zero total variance."""


class FormatParseError(PvBoostError):
    """Model artifact text could not be parsed; carries the byte offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


class ArtifactValidationError(PvBoostError):
    """Model artifact parsed but violates structural invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class LoweringError(PvBoostError):
    """A stored scalar does not fit in float32."""


class InputDimensionError(PvBoostError):
    """Inference input does not have the required number of elements."""
