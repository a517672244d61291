"""Exception hierarchy shared by every module."""


class SindyForgeError(Exception):
    """Base class for all errors raised by sindy_forge."""


class ParameterError(SindyForgeError, ValueError):
    pass


class DataError(SindyForgeError, ValueError):
    """Bad numeric content (NaN/Inf, too few samples...)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class StateError(SindyForgeError):
    """Operation called on an object missing required state."""


class BoundsError(SindyForgeError, IndexError):
    pass


class SchemaError(SindyForgeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CsvFormatError(SindyForgeError, ValueError):
    pass


class CsvParseError(SindyForgeError, ValueError):
    def __init__(self, message, row):
        super().__init__(message)
        self.row = row


class DivergenceError(SindyForgeError, ArithmeticError):
    """A simulation produced a non-finite state at sample ``index``."""

    def __init__(self, index, message=None):
        super().__init__(message or f"simulation diverged at sample {index}")
        self.index = int(index)


class GeometryError(SindyForgeError, ValueError):
    pass


class NoFeasiblePointError(SindyForgeError):
    pass


class ConfigError(SindyForgeError, ValueError):
    pass


class StageError(SindyForgeError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
