"""Exceptions raised by protonlink.

Every error derives from the closest builtin so that callers may catch
either the protonlink class or the builtin one.
"""

import typing as _ty


class ProtonlinkError(Exception):
    error_class: _ty.ClassVar[str] = "ProtonlinkError"
    exit_code: _ty.ClassVar[int] = 1

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        cls.error_class = cls.__name__


class ConfigurationError(ProtonlinkError, ValueError):
    exit_code = 2

    def __init__(self, message: str, *, field: str = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(ProtonlinkError, ValueError):
    exit_code = 3


class UnidentifiableError(DomainError):
    """The fit window does not excite both illumination states."""


class ThresholdUndefinedError(DomainError):
    """Pilot metrics only cover one symbol class."""


class NumericalError(ProtonlinkError, ArithmeticError):
    exit_code = 4


class TraceFormatError(ProtonlinkError, ValueError):
    exit_code = 5

    def __init__(self, message: str, *, row: int = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyTraceError(TraceFormatError): ...


class MalformedRowError(TraceFormatError): ...


class NonUniformSamplingError(TraceFormatError): ...


class PhRangeError(TraceFormatError): ...


class ChannelWarning(UserWarning):
    """Parameters are valid but physically implausible."""
