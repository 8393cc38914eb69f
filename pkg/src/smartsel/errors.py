"""Exception types shared across the package."""


class SmartselError(Exception):
    """Base class for all smartsel errors."""


class DimensionError(SmartselError, ValueError):
    """Operand shapes do not conform; the message names both operands."""


class FormatError(SmartselError, ValueError):
    """A binary or text artifact does not parse.

    ``byte_offset`` locates the first offending byte when known.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class DataError(SmartselError, ValueError):
    """A file parsed but its payload violates a data invariant."""


class StateError(SmartselError, RuntimeError):
    """An object was used before reaching the required state."""


class TrainingError(SmartselError, RuntimeError):
    """Optimization diverged; the message names the failing step."""


class ConfigError(SmartselError, ValueError):
    """Mutually inconsistent models, datasets, or run parameters."""
