"""Least-squares channel estimation from known (pilot) symbols.

The fitted vector is [tau0, tau1, cinf0, cinf1, drift_slope, c_init]; the
noise variance is the mean squared residual at the optimum. Internally the
solver works in minutes and µmol/L/min so all coordinates are O(1).
"""

import itertools as _it
import logging as _logging
import typing as _ty

import numpy as _np
from scipy import stats as _stats

from .errors import DomainError, UnidentifiableError
from .params import ChannelParams, Fields, LinkConfig
from .signal import IlluminationSchedule, Trace, build_schedule, evaluate
from .utils import as_bits
from .utils import lsq as _lsq

_logger = _logging.getLogger(__name__)

PARAM_NAMES = ("tau0", "tau1", "cinf0", "cinf1", "drift_slope", "c_init")
_SCALE = _np.array([60.0, 60.0, 1.0, 1.0, 1.0 / 60.0, 1.0])

TAU_STARTS = (1.0, 5.0)


class Bounds(_ty.NamedTuple):
    """Box constraints in lab units: minutes, µmol/L, µmol/L/min."""

    tau: tuple[float, float] = (0.05, 60.0)
    concentration: tuple[float, float] = (0.01, 100.0)
    drift: tuple[float, float] = (-1.0, 1.0)

    @property
    def lower(self) -> _np.ndarray:
        t, c, d = self.tau, self.concentration, self.drift
        return _np.array([t[0], t[0], c[0], c[0], d[0], c[0]])

    @property
    def upper(self) -> _np.ndarray:
        t, c, d = self.tau, self.concentration, self.drift
        return _np.array([t[1], t[1], c[1], c[1], d[1], c[1]])


class _VectorChannel(_ty.NamedTuple):
    """Unvalidated channel built from a solver vector (scaled units)."""

    x: _np.ndarray

    def at(self, t=None) -> Fields:
        v = self.x * _SCALE
        return Fields(*v)

    def noise_var_at(self, t=None):
        return 0.0

    @property
    def c_init_value(self) -> float:
        return float(self.x[5])


def to_vector(params: ChannelParams) -> _np.ndarray:
    return _np.array([getattr(params, name) for name in PARAM_NAMES]) / _SCALE


def from_vector(x: _ty.Sequence[float], noise_var: float = 0.0) -> ChannelParams:
    values = _np.asarray(x, dtype=float) * _SCALE
    return ChannelParams(**dict(zip(PARAM_NAMES, map(float, values))), noise_var=noise_var)


class FitRequest(object):
    """Trace samples [window[0], window[1]) explained by a known schedule.

    The schedule is given either as bits (with the LinkConfig that maps
    them to illumination) or directly; its time origin is the window start.
    """

    __slots__ = ("trace", "bits", "window", "init", "bounds", "schedule", "cfg")

    def __init__(
        self,
        trace: Trace,
        bits: _ty.Iterable[int] | str = None,
        window: tuple[int, int] = None,
        init: ChannelParams = None,
        bounds: Bounds = None,
        *,
        cfg: LinkConfig = None,
        schedule: IlluminationSchedule = None,
    ):
        if window is None:
            window = (0, len(trace))
        start, stop = int(window[0]), int(window[1])
        if not 0 <= start < stop <= len(trace):
            raise DomainError(f"window [{start}, {stop}) outside trace of {len(trace)}")
        self.trace = trace
        self.window = (start, stop)
        self.init = init
        self.bounds = bounds or Bounds()
        self.cfg = cfg
        if schedule is None:
            if bits is None or cfg is None:
                raise DomainError("a fit needs either bits with a LinkConfig or a schedule")
            bits = as_bits(bits)
            expected = len(bits) * cfg.samples_per_symbol
            if expected != stop - start:
                raise DomainError(
                    f"{len(bits)} symbols cover {expected} samples, window has {stop - start}"
                )
            if 0 not in bits or 1 not in bits or len(bits) < 2:
                raise UnidentifiableError(
                    "fit window needs at least two symbols including a 0 and a 1"
                )
            schedule = build_schedule(bits, cfg)
        else:
            bits = as_bits(bits) if bits is not None else None
            if schedule.end < (stop - start - 1) * trace.dt - 1e-9:
                raise DomainError("schedule is shorter than the fit window")
            if len(set(schedule.states)) < 2:
                raise UnidentifiableError("schedule never switches illumination state")
        self.bits = bits
        self.schedule = schedule

    @property
    def samples(self) -> _np.ndarray:
        return self.trace.samples[self.window[0] : self.window[1]]

    @property
    def times(self) -> _np.ndarray:
        """Sample times relative to the window start."""
        return self.trace.dt * _np.arange(self.window[1] - self.window[0])

    def residual_function(self) -> _lsq.ResidualFn:
        samples, times, schedule = self.samples, self.times, self.schedule
        return lambda x: samples - evaluate(schedule, _VectorChannel(x), times)


class FitResult(_ty.NamedTuple):
    params: ChannelParams
    objective: float
    iterations: int
    converged: bool
    residuals: _np.ndarray
    start_index: int = 0


def objective(candidate: ChannelParams | _ty.Sequence[float], req: FitRequest) -> float:
    """Mean squared deviation between the window and the model under candidate."""
    x = to_vector(candidate) if isinstance(candidate, ChannelParams) else candidate
    r = req.residual_function()(_np.asarray(x, dtype=float))
    return float(r @ r) / r.size


def _dark_runs(req: FitRequest) -> list[_np.ndarray]:
    times = req.times
    runs = []
    for segment in req.schedule:
        if segment.state:
            continue
        mask = (times >= segment.start) & (times < segment.end)
        if mask.any():
            runs.append(req.samples[mask])
    return runs


def _initial_rise(req: FitRequest) -> tuple[float, float]:
    """Mean level at illumination onset and mean rise rate in µmol/L/min."""
    samples, dt = req.samples, req.trace.dt
    levels, rates = [], []
    for segment in req.schedule:
        if not segment.state:
            continue
        first = int(_np.ceil(segment.start / dt - 1e-9))
        last = min(int(_np.floor(segment.end / dt + 1e-9)), samples.size - 1)
        if last <= first:
            continue
        levels.append(samples[first])
        rates.append((samples[last] - samples[first]) / ((last - first) * dt / 60.0))
    if not levels:
        return float(_np.max(samples)), 0.0
    return float(_np.mean(levels)), max(float(_np.mean(rates)), 0.0)


def initial_guesses(req: FitRequest) -> list[_np.ndarray]:
    """The deterministic multi-start grid, in solver units."""
    samples = req.samples
    runs = _dark_runs(req) or [samples]
    c_init = float(_np.mean(runs[0]))
    cinf0 = float(_np.mean(runs[-1]))
    peak = max(float(_np.max(samples)), cinf0 * 1.01)
    c_on, rise = _initial_rise(req)

    times = req.times
    dark = _np.zeros(times.size, dtype=bool)
    for segment in req.schedule:
        if not segment.state:
            dark |= (times >= segment.start) & (times < segment.end)
    idx = _np.flatnonzero(dark)
    if idx.size > 400:
        idx = idx[_np.linspace(0, idx.size - 1, 400).astype(int)]
    slope = 0.0
    if idx.size >= 2:
        # µmol/L per second to per minute
        slope = float(_stats.theilslopes(samples[idx], times[idx])[0]) * 60.0

    lower, upper = req.bounds.lower, req.bounds.upper
    guesses = []
    for tau0, tau1, drift in _it.product(TAU_STARTS, TAU_STARTS, (0.0, slope)):
        # dc/dt = (cinf1 - c) / tau1 at the start of illumination
        cinf1 = max(c_on + rise * tau1, peak)
        x = _np.array([tau0, tau1, cinf0, cinf1, drift, c_init])
        guesses.append(_np.clip(x, lower, upper))
    return guesses


def fit(req: FitRequest, *, max_iter: int = 300) -> FitResult:
    """Multi-start bounded least squares; returns the best local minimum."""
    fun = req.residual_function()
    lower, upper = req.bounds.lower, req.bounds.upper
    starts = initial_guesses(req)
    if req.init is not None:
        starts.insert(0, to_vector(req.init))

    best: tuple[float, float, int] = None
    best_result: _lsq.LsqResult = None
    for index, x0 in enumerate(starts):
        result = _lsq.damped_gauss_newton(fun, x0, lower, upper, max_iter=max_iter)
        _logger.debug(
            "start %d: cost=%.6g iterations=%d (%s)",
            index,
            result.cost,
            result.iterations,
            result.message,
        )
        key = (result.cost, float(_np.linalg.norm(result.x)), index)
        if best is None or key < best:
            best, best_result = key, result

    cost, _, index = best
    if not best_result.converged:
        _logger.warning("fit did not converge (%s), objective %.6g", best_result.message, cost)
    return FitResult(
        params=from_vector(best_result.x, noise_var=cost),
        objective=cost,
        iterations=best_result.iterations,
        converged=best_result.converged,
        residuals=best_result.residuals,
        start_index=index,
    )


def noise_variance(result: FitResult) -> float:
    return result.objective


def residual_histogram(
    residuals: _ty.Sequence[float], bins: int = 50
) -> tuple[_np.ndarray, _np.ndarray, _np.ndarray]:
    """Normalized histogram of residuals and the matching normal density."""
    residuals = _np.asarray(residuals, dtype=float)
    density, edges = _np.histogram(residuals, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mu, sigma = _stats.norm.fit(residuals)
    return centers, density, _stats.norm.pdf(centers, mu, sigma)
