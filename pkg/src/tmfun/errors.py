"""Exception types raised across the package."""


class TmfunError(Exception):
    """Base class for every error raised by tmfun."""


class InvalidInput(TmfunError, ValueError):
    pass


class ShapeMismatch(TmfunError, ValueError):
    pass


class ColdStartUser(TmfunError, ValueError):
    pass


class NonFiniteFeature(TmfunError, ValueError):
    pass


class NonFiniteInput(TmfunError, ValueError):
    pass


class NonFiniteGradient(TmfunError, FloatingPointError):
    pass


class SamplingExhausted(TmfunError, RuntimeError):
    pass


class IoError(TmfunError, OSError):
    pass


class FormatError(TmfunError, ValueError):
    pass


class ParseError(TmfunError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
