"""Exception hierarchy shared by every stage of the pipeline."""


class MpcDetectError(Exception):
    """Base class for all package errors."""


class DataError(MpcDetectError, ValueError):
    """Input data is missing, malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class ValidationError(DataError):
    pass


class DegenerateInputError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class ParameterError(MpcDetectError, ValueError):
    """A configuration value is out of its admissible range."""


class ConfigError(ParameterError):
    pass


class PlacementError(ParameterError):
    pass


class ShapeError(MpcDetectError, ValueError):
    pass


class ContractError(MpcDetectError, RuntimeError):
    pass


class DivergenceError(MpcDetectError, ArithmeticError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)
