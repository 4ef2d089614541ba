"""Deterministic and stochastic proton-concentration signals.

The channel relaxes exponentially towards a state dependent equilibrium
(darkness 0, illumination 1) with a state dependent time constant, on top
of a linear drift, plus white Gaussian measurement noise.
"""

import logging as _logging
import math as _math
import typing as _ty

import numpy as _np

from .errors import ConfigurationError, DomainError, NumericalError
from .params import ChannelLike, LinkConfig
from .utils import as_bits

_logger = _logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"
CONCENTRATION_FLOOR = 1e-6

Seed = int | _np.random.SeedSequence


class Segment(_ty.NamedTuple):
    start: float
    end: float
    state: int

    @property
    def duration(self):
        return self.end - self.start


class IlluminationSchedule(object):
    """Contiguous, time sorted on/off segments with no equal-state neighbours."""

    __slots__ = ("_segments",)

    def __init__(self, segments: _ty.Iterable[Segment | tuple[float, float, int]]):
        merged: list[Segment] = []
        for segment in segments:
            segment = Segment(float(segment[0]), float(segment[1]), int(segment[2]))
            if segment.state not in (0, 1):
                raise DomainError(f"illumination state must be 0 or 1: {segment}")
            if not segment.end > segment.start:
                raise DomainError(f"empty segment {segment}")
            if merged:
                last = merged[-1]
                if abs(segment.start - last.end) > 1e-9 * max(1.0, abs(last.end)):
                    raise DomainError(f"segments not contiguous at t={last.end}")
                if segment.state == last.state:
                    merged[-1] = Segment(last.start, segment.end, last.state)
                    continue
                segment = Segment(last.end, segment.end, segment.state)
            merged.append(segment)
        if not merged:
            raise DomainError("schedule needs at least one segment")
        self._segments = tuple(merged)

    @classmethod
    def from_durations(
        cls, pattern: _ty.Iterable[tuple[int, float]], *, t0: float = 0.0
    ):
        """Build from (state, seconds) pairs, e.g. [(1, 3300), (0, 3300)]."""
        segments = []
        t = t0
        for state, duration in pattern:
            segments.append(Segment(t, t + duration, state))
            t += duration
        return cls(segments)

    def __iter__(self):
        return iter(self._segments)

    def __len__(self):
        return len(self._segments)

    def __getitem__(self, idx: int) -> Segment:
        return self._segments[idx]

    def __eq__(self, other):
        if not isinstance(other, IlluminationSchedule):
            return NotImplemented
        return self._segments == other._segments

    def __hash__(self):
        return hash(self._segments)

    def __repr__(self):
        return "{}({!r})".format(type(self).__name__, list(self._segments))

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    @property
    def start(self) -> float:
        return self._segments[0].start

    @property
    def end(self) -> float:
        return self._segments[-1].end

    @property
    def starts(self) -> _np.ndarray:
        return _np.array([s.start for s in self._segments])

    @property
    def states(self) -> _np.ndarray:
        return _np.array([s.state for s in self._segments], dtype=int)

    def state_at(self, t: float) -> int:
        idx = int(_np.searchsorted(self.starts, t, side="right")) - 1
        if idx < 0 or t > self.end:
            raise DomainError(f"t={t} outside schedule [{self.start}, {self.end}]")
        return self._segments[min(idx, len(self) - 1)].state

    def with_margins(self, before: float = 0.0, after: float = 0.0):
        """Dark periods around the schedule; the result starts at 0."""
        shift = before - self.start
        segments = [
            Segment(s.start + shift, s.end + shift, s.state) for s in self._segments
        ]
        if before > 0:
            segments.insert(0, Segment(0.0, before, 0))
        if after > 0:
            end = segments[-1].end
            segments.append(Segment(end, end + after, 0))
        return type(self)(segments)


class Grid(_ty.NamedTuple):
    """Uniform sample times t_start + n*dt for n in range(n)."""

    t_start: float
    dt: float
    n: int

    @property
    def times(self) -> _np.ndarray:
        return self.t_start + self.dt * _np.arange(self.n)

    @classmethod
    def covering(cls, schedule: IlluminationSchedule, dt: float):
        n = int(round((schedule.end - schedule.start) / dt))
        return cls(schedule.start, dt, n)


class Trace(object):
    """A uniformly sampled concentration series in µmol/L."""

    __slots__ = ("_t_start", "_dt", "_samples")

    def __init__(self, t_start: float, dt: float, samples: _ty.Iterable[float]):
        samples = _np.array(samples, dtype=float)
        if samples.ndim != 1:
            raise DomainError("trace samples must be one dimensional")
        if not dt > 0:
            raise DomainError(f"sample interval must be > 0, got {dt}")
        if not _np.all(_np.isfinite(samples)):
            raise DomainError("trace samples must be finite")
        if _np.any(samples <= 0):
            raise DomainError("concentrations must be > 0")
        samples.setflags(write=False)
        self._t_start = float(t_start)
        self._dt = float(dt)
        self._samples = samples

    @property
    def t_start(self) -> float:
        return self._t_start

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def samples(self) -> _np.ndarray:
        return self._samples

    @property
    def times(self) -> _np.ndarray:
        return self._t_start + self._dt * _np.arange(len(self._samples))

    @property
    def grid(self) -> Grid:
        return Grid(self._t_start, self._dt, len(self._samples))

    def __len__(self):
        return len(self._samples)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self._t_start == other._t_start
            and self._dt == other._dt
            and _np.array_equal(self._samples, other._samples)
        )

    def __repr__(self):
        return "<{} t_start={} dt={} n={}>".format(
            type(self).__name__, self._t_start, self._dt, len(self)
        )

    def slice(self, start: int, stop: int) -> "Trace":
        """Samples [start, stop) as a new trace with the matching start time."""
        if not 0 <= start < stop <= len(self):
            raise DomainError(f"sample range [{start}, {stop}) outside trace of {len(self)}")
        return Trace(
            self._t_start + start * self._dt, self._dt, self._samples[start:stop]
        )

    def with_samples(self, samples: _ty.Iterable[float]) -> "Trace":
        return Trace(self._t_start, self._dt, samples)


def build_schedule(
    bits: _ty.Iterable[int] | str, cfg: LinkConfig, *, t0: float = 0.0
) -> IlluminationSchedule:
    """OOK illumination: a '1' lights the first alpha*t_symb of its slot."""
    bits = as_bits(bits)
    if not bits:
        raise DomainError("bit sequence is empty")
    if not isinstance(cfg, LinkConfig):
        raise ConfigurationError(f"expected LinkConfig, got {type(cfg).__name__}")
    t_symb = cfg.samples_per_symbol * cfg.dt
    t_on = cfg.t_on
    segments = []
    for k, bit in enumerate(bits):
        start = t0 + k * t_symb
        if bit:
            segments.append(Segment(start, start + t_on, 1))
            segments.append(Segment(start + t_on, start + t_symb, 0))
        else:
            segments.append(Segment(start, start + t_symb, 0))
    return IlluminationSchedule(segments)


def segment_mean(level, state: int, elapsed, params: ChannelLike, t=None):
    """Exponential approach from level towards the state's equilibrium.

    No drift term; ``t`` picks the coefficients of a time varying channel.
    """
    fields = params.at(t if t is not None else 0.0)
    tau = fields.tau(state)
    cinf = fields.cinf(state)
    return level - (cinf - level) * _np.expm1(-_np.asarray(elapsed) / tau)


def segment_levels(schedule: IlluminationSchedule, params: ChannelLike) -> _np.ndarray:
    """Mean signal at each segment start, followed by its value at the end."""
    levels = _np.empty(len(schedule) + 1)
    level = params.c_init_value
    levels[0] = level
    for idx, segment in enumerate(schedule):
        fields = params.at(segment.end)
        elapsed = segment.duration
        level = (
            float(segment_mean(level, segment.state, elapsed, params, segment.end))
            + fields.drift_slope * elapsed
        )
        levels[idx + 1] = level
    return levels


def evaluate(
    schedule: IlluminationSchedule, params: ChannelLike, times: _ty.Iterable[float]
) -> _np.ndarray:
    """Deterministic concentration at arbitrary times inside the schedule."""
    times = _np.asarray(times, dtype=float)
    tol = 1e-9 * max(1.0, abs(schedule.end))
    if times.size and (
        times.min() < schedule.start - tol or times.max() > schedule.end + tol
    ):
        raise DomainError(
            f"times [{times.min()}, {times.max()}] outside schedule "
            f"[{schedule.start}, {schedule.end}]"
        )
    levels = segment_levels(schedule, params)
    starts = schedule.starts
    states = schedule.states
    idx = _np.clip(_np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
    elapsed = _np.maximum(times - starts[idx], 0.0)
    level = levels[idx]
    on = states[idx] == 1
    fields = params.at(times)
    tau = _np.where(on, fields.tau1, fields.tau0)
    cinf = _np.where(on, fields.cinf1, fields.cinf0)
    return level - (cinf - level) * _np.expm1(-elapsed / tau) + fields.drift_slope * elapsed


def _as_grid(grid: Grid | Trace | _ty.Sequence[float]) -> Grid:
    if isinstance(grid, Grid):
        return grid
    if isinstance(grid, Trace):
        return grid.grid
    times = _np.asarray(grid, dtype=float)
    if times.size < 2:
        raise DomainError("need at least two grid times to infer dt")
    dt = float(times[1] - times[0])
    if not _np.allclose(_np.diff(times), dt, rtol=0, atol=1e-9 * max(1.0, dt)):
        raise DomainError("grid is not uniform")
    return Grid(float(times[0]), dt, times.size)


def mean_signal(
    schedule: IlluminationSchedule, params: ChannelLike, grid: Grid | _ty.Sequence[float]
) -> Trace:
    grid = _as_grid(grid)
    values = evaluate(schedule, params, grid.times)
    clamped = int(_np.count_nonzero(values < CONCENTRATION_FLOOR))
    if clamped:
        _logger.warning("clamped %d mean samples to %g", clamped, CONCENTRATION_FLOOR)
    return Trace(grid.t_start, grid.dt, _np.maximum(values, CONCENTRATION_FLOOR))


def make_rng(seed: Seed) -> _np.random.Generator:
    if not isinstance(seed, _np.random.SeedSequence):
        seed = _np.random.SeedSequence(int(seed))
    return _np.random.Generator(_np.random.PCG64(seed))


def simulate(
    schedule: IlluminationSchedule,
    params: ChannelLike,
    grid: Grid | _ty.Sequence[float],
    seed: Seed,
) -> Trace:
    """Mean signal plus i.i.d. Gaussian noise, reproducible for a given seed."""
    grid = _as_grid(grid)
    times = grid.times
    values = evaluate(schedule, params, times)
    noise_var = _np.broadcast_to(params.noise_var_at(times), times.shape)
    if _np.any(noise_var > 0):
        rng = make_rng(seed)
        values = values + rng.standard_normal(times.size) * _np.sqrt(noise_var)
    clamped = int(_np.count_nonzero(values < CONCENTRATION_FLOOR))
    if clamped:
        _logger.warning("clamped %d simulated samples to %g", clamped, CONCENTRATION_FLOOR)
    return Trace(grid.t_start, grid.dt, _np.maximum(values, CONCENTRATION_FLOOR))


def ode_oracle(
    schedule: IlluminationSchedule,
    rho: float,
    beta0: float,
    beta1: float,
    c_eq: float,
    c_init: float,
    grid: Grid | _ty.Sequence[float],
    *,
    substeps: int = 10,
) -> Trace:
    """Fixed step RK4 integration of dc/dt = i*rho - beta_i*(c - c_eq).

    rho in µmol/L/min, beta in 1/min. Reference solution for tests only.
    """
    if rho < 0 or beta0 <= 0 or beta1 <= 0:
        raise DomainError("need rho >= 0 and beta0, beta1 > 0")
    grid = _as_grid(grid)
    rho_s = rho / 60.0
    betas = (beta0 / 60.0, beta1 / 60.0)
    h_max = grid.dt / substeps

    def rate(c: float, state: int) -> float:
        return state * rho_s - betas[state] * (c - c_eq)

    times = grid.times
    edges = [s.end for s in schedule]
    breakpoints = _np.unique(_np.concatenate([[schedule.start], edges, times]))
    breakpoints = breakpoints[breakpoints <= times[-1] + 1e-12]
    values = {}
    c = float(c_init)
    t = breakpoints[0]
    values[t] = c
    for t_next in breakpoints[1:]:
        state = schedule.state_at(0.5 * (t + t_next))
        steps = max(1, _math.ceil((t_next - t) / h_max - 1e-9))
        h = (t_next - t) / steps
        for _ in range(steps):
            k1 = rate(c, state)
            k2 = rate(c + 0.5 * h * k1, state)
            k3 = rate(c + 0.5 * h * k2, state)
            k4 = rate(c + h * k3, state)
            c += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not _math.isfinite(c):
            raise NumericalError(f"integration diverged at t={t_next}")
        t = t_next
        values[t] = c
    return Trace(grid.t_start, grid.dt, [values[t] for t in times])
