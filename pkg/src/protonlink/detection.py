"""Symbol-by-symbol detection.

Two receivers share the symbol windows T_k: a decision-directed maximum
likelihood detector driven by the fitted model, and a model-free detector
that thresholds the peak slope of the smoothed concentration.
"""

import logging as _logging
import typing as _ty

import numpy as _np
from numpy.lib.stride_tricks import sliding_window_view as _sliding

from .errors import DomainError, ThresholdUndefinedError
from .params import ChannelLike, LinkConfig
from .signal import IlluminationSchedule, Segment, Trace, evaluate
from .utils import as_bits, sample_count

_logger = _logging.getLogger(__name__)


class SymbolWindow(_ty.NamedTuple):
    """Symbol k (1-based) occupies trace samples [start, stop)."""

    k: int
    start: int
    stop: int

    @property
    def sample_range(self) -> range:
        return range(self.start, self.stop)

    @classmethod
    def of(cls, k: int, cfg: LinkConfig, offset: int = 0):
        n = cfg.samples_per_symbol
        return cls(k, offset + (k - 1) * n, offset + k * n)


def symbol_windows(count: int, cfg: LinkConfig, offset: int = 0) -> list[SymbolWindow]:
    return [SymbolWindow.of(k, cfg, offset) for k in range(1, count + 1)]


class _Anchored(_ty.NamedTuple):
    """A channel whose deterministic level at the schedule start is given."""

    channel: ChannelLike
    level: float

    def at(self, t):
        return self.channel.at(t)

    def noise_var_at(self, t):
        return 0.0

    @property
    def c_init_value(self) -> float:
        return self.level


class DetectorState(object):
    """Decision history and model level at the current symbol boundary.

    Times are relative to the origin sample, where the model level is the
    channel's c_init. After any symbol the model is in darkness; the open
    dark segment started at ``anchor_time`` from ``anchor_level``.
    """

    __slots__ = (
        "params",
        "cfg",
        "origin",
        "first_k",
        "history",
        "anchor_time",
        "anchor_level",
        "boundary_level",
    )

    def __init__(
        self,
        params: ChannelLike,
        cfg: LinkConfig,
        *,
        origin: int = 0,
        first_k: int = 1,
        history: _ty.Iterable[int] = (),
    ):
        self.params = params
        self.cfg = cfg
        self.origin = origin
        self.first_k = first_k
        self.history: list[int] = []
        self.anchor_time = 0.0
        self.anchor_level = params.c_init_value
        self.boundary_level = params.c_init_value
        for bit in as_bits(history):
            self.advance(bit)

    def __repr__(self):
        return "<{} k={} boundary_level={:.6g}>".format(
            type(self).__name__, self.next_k, self.boundary_level
        )

    @property
    def next_k(self) -> int:
        return self.first_k + len(self.history)

    @property
    def boundary_time(self) -> float:
        return len(self.history) * self.cfg.samples_per_symbol * self.cfg.dt

    def _hypothesis(self, bit: int) -> tuple[IlluminationSchedule, _Anchored]:
        tb = self.boundary_time
        t_symb = self.cfg.samples_per_symbol * self.cfg.dt
        segments = []
        if tb > self.anchor_time:
            segments.append(Segment(self.anchor_time, tb, 0))
        if bit:
            segments.append(Segment(tb, tb + self.cfg.t_on, 1))
            segments.append(Segment(tb + self.cfg.t_on, tb + t_symb, 0))
        else:
            segments.append(Segment(tb, tb + t_symb, 0))
        return IlluminationSchedule(segments), _Anchored(self.params, self.anchor_level)

    def hypothesis_mean(self, bit: int) -> _np.ndarray:
        """Model samples over the next symbol window if it carried ``bit``."""
        schedule, channel = self._hypothesis(bit)
        n = self.cfg.samples_per_symbol
        times = self.boundary_time + self.cfg.dt * _np.arange(n)
        return evaluate(schedule, channel, times)

    def advance(self, bit: int):
        """Append ``bit`` to the history and move the boundary one symbol."""
        schedule, channel = self._hypothesis(bit)
        tb = self.boundary_time
        t_on_end = tb + self.cfg.t_on
        t_end = schedule.end
        levels = evaluate(schedule, channel, [t_on_end, t_end])
        if bit:
            self.anchor_time = t_on_end
            self.anchor_level = float(levels[0])
        self.boundary_level = float(levels[1])
        self.history.append(int(bit))

    def check_window(self, window: SymbolWindow):
        expected = self.origin + len(self.history) * self.cfg.samples_per_symbol
        if window.k != self.next_k or window.start != expected:
            raise DomainError(
                f"detector at symbol {self.next_k} (sample {expected}) "
                f"got window {window}"
            )


def _window_samples(trace: Trace, window: SymbolWindow) -> _np.ndarray:
    if not 0 <= window.start < window.stop <= len(trace):
        raise DomainError(f"window {window} outside trace of {len(trace)} samples")
    return trace.samples[window.start : window.stop]


def ml_cost(hypothesis: int, state: DetectorState, trace: Trace, window: SymbolWindow) -> float:
    state.check_window(window)
    deviation = _window_samples(trace, window) - state.hypothesis_mean(hypothesis)
    return float(_np.mean(deviation**2))


def ml_detect(
    state: DetectorState,
    trace: Trace,
    window: SymbolWindow,
    *,
    true_bit: int = None,
) -> tuple[int, float, float]:
    """Minimum-cost bit for window; ties go to 0.

    With ``true_bit`` the state is advanced with the true symbol (genie
    aided), otherwise with the decision.
    """
    cost0 = ml_cost(0, state, trace, window)
    cost1 = ml_cost(1, state, trace, window)
    bit = 1 if cost1 < cost0 else 0
    state.advance(bit if true_bit is None else true_bit)
    return bit, cost0, cost1


class DiffSignal(object):
    """Forward-differenced smoothed concentration in µmol/L per second.

    Value n is stamped at trace time t_n and looks ahead over the samples
    up to t_n + T^sm + T^df; ``origin`` is the start time of the trace that
    symbol windows index.
    """

    __slots__ = ("t_start", "dt", "values", "origin")

    def __init__(
        self, t_start: float, dt: float, values: _ty.Iterable[float], origin: float = None
    ):
        values = _np.array(values, dtype=float)
        if not _np.all(_np.isfinite(values)):
            raise DomainError("differentiated signal must be finite")
        values.setflags(write=False)
        self.t_start = float(t_start)
        self.dt = float(dt)
        self.values = values
        self.origin = self.t_start if origin is None else float(origin)

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return "<{} t_start={} dt={} n={}>".format(
            type(self).__name__, self.t_start, self.dt, len(self)
        )

    @property
    def times(self) -> _np.ndarray:
        return self.t_start + self.dt * _np.arange(len(self.values))

    @property
    def delay(self) -> int:
        """Samples between a window index and the diff index with the same time."""
        return int(round((self.t_start - self.origin) / self.dt))


def smooth(trace: Trace, t_smooth: float) -> Trace:
    """Forward moving average over t_smooth/dt + 1 samples.

    Sample i of the result averages trace samples i .. i + t_smooth/dt and
    keeps the time of sample i; the last t_smooth/dt samples are dropped.
    """
    width = sample_count(t_smooth, trace.dt, field="t_smooth")
    if len(trace) <= width:
        raise DomainError(f"trace of {len(trace)} samples too short to smooth over {width + 1}")
    if width == 0:
        return trace
    return Trace(trace.t_start, trace.dt, _sliding(trace.samples, width + 1).mean(axis=1))


def differentiate(smoothed: Trace, t_diff: float, *, origin: float = None) -> DiffSignal:
    """(x[i + lag] - x[i]) / t_diff, stamped at the earlier sample."""
    lag = sample_count(t_diff, smoothed.dt, field="t_diff")
    if lag == 0 or len(smoothed) <= lag:
        raise DomainError(f"need more than {lag} samples and a nonzero lag")
    x = smoothed.samples
    return DiffSignal(
        smoothed.t_start,
        smoothed.dt,
        (x[lag:] - x[:-lag]) / t_diff,
        origin=smoothed.t_start if origin is None else origin,
    )


def diff_signal(trace: Trace, cfg: LinkConfig) -> DiffSignal:
    return differentiate(smooth(trace, cfg.t_smooth), cfg.t_diff, origin=trace.t_start)


def detection_metric(diff: DiffSignal, window: SymbolWindow) -> float:
    """Peak of the differentiated signal over the window.

    Windows running past the shortened tail of the diff signal use the
    available prefix.
    """
    offset = diff.delay
    lo = max(window.start - offset, 0)
    hi = min(window.stop - offset, len(diff))
    if hi <= lo:
        raise DomainError(f"window {window} has no differentiated samples")
    return float(_np.max(diff.values[lo:hi]))


def metrics(diff: DiffSignal, windows: _ty.Iterable[SymbolWindow]) -> _np.ndarray:
    return _np.array([detection_metric(diff, window) for window in windows])


def estimate_threshold(
    metrics: _ty.Sequence[float], pilot_bits: _ty.Iterable[int], gamma: float
) -> float:
    """gamma-weighted mix of the mean metric of the 0 and 1 pilots."""
    metrics = _np.asarray(metrics, dtype=float)
    bits = _np.array(as_bits(pilot_bits), dtype=int)
    if metrics.shape != bits.shape:
        raise DomainError(f"{metrics.size} metrics for {bits.size} pilot bits")
    zeros, ones = metrics[bits == 0], metrics[bits == 1]
    if zeros.size == 0 or ones.size == 0:
        raise ThresholdUndefinedError("pilot bits contain a single symbol class")
    return float(gamma * zeros.mean() + (1 - gamma) * ones.mean())


def threshold_detect(q: float, eta: float) -> int:
    return 1 if q >= eta else 0
