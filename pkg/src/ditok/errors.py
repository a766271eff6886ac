"""Exception types shared across the workbench."""


class DitokError(Exception):
    pass


class DimensionError(DitokError, ValueError):
    """Array shapes do not satisfy an operation's contract."""


class ConfigurationError(DitokError, ValueError):
    """A configuration value is out of its legal range."""


class ValidationError(DitokError, ValueError):
    """Data violates a declared invariant."""


class FormatError(DitokError, ValueError):
    """A binary file has a bad magic number or unsupported version."""


class LengthError(DitokError, ValueError):
    """Declared lengths disagree with the actual payload, or input too short."""


class ParseError(DitokError, ValueError):
    """A text input (manifest line, config) could not be parsed."""


class CapacityError(DitokError, ValueError):
    """Problem size exceeds what the algorithm supports."""


class NumericError(DitokError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class DeterminismError(DitokError, RuntimeError):
    """Two evaluations of a supposedly deterministic function disagreed."""


class DivergenceError(DitokError, RuntimeError):
    """Training loss became non-finite or exploded."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
