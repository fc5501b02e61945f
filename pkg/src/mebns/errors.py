"""Exception hierarchy shared by every module."""


class MebnsError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    kind = "error"


class ParseError(MebnsError, ValueError):
    kind = "parse"

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class RangeError(MebnsError, ValueError):
    kind = "range"


class NumericError(MebnsError, ArithmeticError):
    """Raised on NaN/inf losses, activations or gradients."""

    kind = "numeric"

    def __init__(self, message, value=None):
        self.value = value
        super().__init__(message)


class SamplingError(MebnsError, RuntimeError):
    kind = "sampling"

    def __init__(self, message, nodes=()):
        self.nodes = tuple(int(n) for n in nodes)
        super().__init__(message)


class ConfigError(MebnsError, ValueError):
    kind = "config"
