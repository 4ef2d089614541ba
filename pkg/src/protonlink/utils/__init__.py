import functools as _functools
import typing as _ty

import numpy as _np

from ..errors import ConfigurationError, DomainError

Bits = _ty.Sequence[int]


def notimplemented(method):
    @_functools.wraps(method)
    def _notimplemented(*args, **kwargs):
        raise NotImplementedError(f"Not implement method  {method.__name__}")

    return _notimplemented


def as_bits(bits: _ty.Iterable[int] | str) -> tuple[int, ...]:
    """Normalize '1001', [1, 0, 0, 1] or a numpy array to a tuple of 0/1 ints."""
    if isinstance(bits, str):
        bits = [ch for ch in bits if not ch.isspace() and ch not in ",_"]
    result = tuple(int(bit) for bit in bits)
    for bit in result:
        if bit not in (0, 1):
            raise DomainError(f"bits must be 0 or 1, got {bit!r}")
    return result


def sample_count(duration: float, dt: float, *, field: str) -> int:
    """Number of samples spanned by duration; duration/dt must be integral."""
    ratio = duration / dt
    count = int(round(ratio))
    if count < 0 or abs(ratio - count) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigurationError(
            f"{duration!r} s is not an integer multiple of dt={dt!r} s", field=field
        )
    return count


def pilot_mask(length: int, positions: _ty.Iterable[int]) -> _np.ndarray:
    mask = _np.zeros(length, dtype=bool)
    for index in positions:
        if index < length:
            mask[index] = True
    return mask
