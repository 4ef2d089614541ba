"""pH and concentration traces on disk.

Files are two-column CSV with a header ``t_seconds,ph`` or
``t_seconds,conc_umol_per_L``. Values are written with 17 significant
digits so a concentration trace survives a save/load cycle bit for bit.
"""

import enum as _enum
import logging as _logging
import os as _os
import re as _re
import typing as _ty

import numpy as _np
import pandas as _pd

from .errors import (
    DomainError,
    EmptyTraceError,
    MalformedRowError,
    NonUniformSamplingError,
    PhRangeError,
)
from .protocols.io import BinaryOpen
from .signal import Trace

_logger = _logging.getLogger(__name__)

TIME_COLUMN = "t_seconds"
SAMPLING_TOLERANCE = 1e-6
FLOAT_FORMAT = "%.17g"

PathLike = str | _os.PathLike | BinaryOpen


class Kind(str, _enum.Enum):
    Ph = "ph"
    Concentration = "concentration"

    @property
    def column(self) -> str:
        return "ph" if self is Kind.Ph else "conc_umol_per_L"

    @classmethod
    def from_column(cls, column: str):
        for kind in cls:
            if kind.column == column:
                return kind
        raise MalformedRowError(
            f"unknown value column {column!r}, expected one of {[k.column for k in cls]}", row=1
        )


class PhSample(_ty.NamedTuple):
    """One reading of a pH logger; t in seconds since the trace start."""

    t: float
    ph: float

    @property
    def concentration(self) -> float:
        return float(ph_to_conc(self.ph))


def ph_to_conc(ph: float | _np.ndarray) -> float | _np.ndarray:
    """pH to proton concentration in µmol/L."""
    ph = _np.asarray(ph, dtype=float)
    bad = ~((ph > 0) & (ph < 14))
    if bad.any():
        raise PhRangeError(f"pH {ph[bad].flat[0]!r} outside (0, 14)")
    conc = 10.0 ** (6.0 - ph)
    return float(conc) if conc.ndim == 0 else conc


def conc_to_ph(conc: float | _np.ndarray) -> float | _np.ndarray:
    """Proton concentration in µmol/L to pH."""
    conc = _np.asarray(conc, dtype=float)
    bad = ~(conc > 0)
    if bad.any():
        raise DomainError(f"concentration {conc[bad].flat[0]!r} µmol/L is not positive")
    ph = 6.0 - _np.log10(conc)
    return float(ph) if ph.ndim == 0 else ph


def ph_samples(trace: Trace) -> list[PhSample]:
    phs = conc_to_ph(trace.samples)
    return [PhSample(float(t), float(p)) for t, p in zip(trace.times, phs)]


def _open(path: PathLike, mode: str):
    if isinstance(path, BinaryOpen) or (hasattr(path, "open") and not isinstance(path, (str, _os.PathLike))):
        return path.open(mode, encoding="utf-8", newline="")
    return open(path, mode, newline="", encoding="utf-8")


_LINE = _re.compile(r"line (\d+)")


def _read(path: PathLike) -> _pd.DataFrame:
    try:
        with _open(path, "r") as fh:
            return _pd.read_csv(fh, float_precision="round_trip", skipinitialspace=True)
    except _pd.errors.EmptyDataError:
        raise EmptyTraceError(f"{path} is empty")
    except _pd.errors.ParserError as error:
        match = _LINE.search(str(error))
        raise MalformedRowError(str(error), row=int(match.group(1)) if match else None)


def _numeric(frame: _pd.DataFrame, column: str) -> _np.ndarray:
    values = _pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    bad = _np.flatnonzero(~_np.isfinite(values))
    if bad.size:
        # header is line 1
        row = int(bad[0]) + 2
        raise MalformedRowError(f"{column}={frame[column].iloc[bad[0]]!r} is not a number", row=row)
    return values


def load_trace(path: PathLike, kind: Kind | str = None) -> Trace:
    """Read a uniformly sampled trace; pH files are converted to µmol/L.

    Without ``kind`` the header decides.
    """
    frame = _read(path)
    columns = list(frame.columns)
    if len(columns) != 2 or columns[0] != TIME_COLUMN:
        raise MalformedRowError(
            f"header {','.join(map(str, columns))!r} is not '{TIME_COLUMN},<ph|conc_umol_per_L>'",
            row=1,
        )
    found = Kind.from_column(columns[1])
    if kind is not None and Kind(kind) is not found:
        raise MalformedRowError(f"expected a {Kind(kind).value} trace, file holds {found.value}", row=1)
    if len(frame) == 0:
        raise EmptyTraceError(f"{path} has no samples")
    if len(frame) == 1:
        raise EmptyTraceError(f"{path} has a single sample, dt is undefined")

    times = _numeric(frame, TIME_COLUMN)
    values = _numeric(frame, columns[1])
    dt = (times[-1] - times[0]) / (times.size - 1)
    if not dt > 0:
        raise NonUniformSamplingError("timestamps do not increase")
    expected = times[0] + dt * _np.arange(times.size)
    off = _np.flatnonzero(_np.abs(times - expected) > SAMPLING_TOLERANCE)
    if off.size:
        raise NonUniformSamplingError(
            f"t={times[off[0]]!r} deviates from the {dt!r} s grid", row=int(off[0]) + 2
        )

    if found is Kind.Ph:
        try:
            values = ph_to_conc(values)
        except PhRangeError as error:
            bad = int(_np.flatnonzero(~((values > 0) & (values < 14)))[0])
            raise PhRangeError(str(error), row=bad + 2) from error
    elif not _np.all(values > 0):
        bad = int(_np.flatnonzero(~(values > 0))[0])
        raise MalformedRowError("concentration must be positive", row=bad + 2)
    _logger.debug("loaded %d %s samples from %s, dt=%g", len(values), found.value, path, dt)
    return Trace(times[0], dt, values)


def save_trace(trace: Trace, path: PathLike, kind: Kind | str = Kind.Concentration):
    kind = Kind(kind)
    if len(trace) == 0:
        raise EmptyTraceError("refusing to write an empty trace")
    values = trace.samples if kind is Kind.Concentration else conc_to_ph(trace.samples)
    frame = _pd.DataFrame({TIME_COLUMN: trace.times, kind.column: values})
    with _open(path, "w") as fh:
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _logger.debug("saved %d %s samples to %s", len(trace), kind.value, path)
