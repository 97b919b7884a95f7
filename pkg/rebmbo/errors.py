"""Exceptions raised across the toolkit."""


class RebmboError(Exception):
    """Base class for every error raised by rebmbo."""


class InputError(RebmboError, ValueError):
    """An input point or array has the wrong shape or non-finite entries."""


class ParameterError(RebmboError, ValueError):
    """A hyperparameter or structural parameter is out of its valid range."""


class UnknownBenchmarkError(RebmboError, KeyError):
    """The requested benchmark name is not registered."""


class NumericalError(RebmboError, ArithmeticError):
    """A factorization or optimization failed even after the usual fallbacks."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else {}


class UnsupportedVariantError(RebmboError, NotImplementedError):
    """The operation is only defined for a different surrogate variant."""


class ConfigError(RebmboError, ValueError):
    """An experiment file violates the schema."""

    def __init__(self, message, key_path=None):
        super().__init__(message)
        self.key_path = key_path


class RunAborted(RebmboError, RuntimeError):
    """A run failed part way; the records collected so far are attached."""

    def __init__(self, message, partial_trace):
        super().__init__(message)
        self.partial_trace = partial_trace
