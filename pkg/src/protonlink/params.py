"""Channel and link parameter sets.

Times are stored in seconds. The minute-based surface (config files,
``from_minutes``) takes time constants in minutes and drift slopes in
µmol/L per minute; conversion happens once, here.
"""

import dataclasses as _dc
import math as _math
import typing as _ty
import warnings as _warnings

import numpy as _np

from .errors import ChannelWarning, ConfigurationError
from .utils import as_bits, sample_count

SECONDS_PER_MINUTE = 60.0

DEFAULT_PILOTS = (1, 1, 0, 0, 1, 0, 1, 0, 0, 0)


class Fields(_ty.NamedTuple):
    """Raw model coefficients, scalars or arrays aligned with a time grid."""

    tau0: float | _np.ndarray
    tau1: float | _np.ndarray
    cinf0: float | _np.ndarray
    cinf1: float | _np.ndarray
    drift_slope: float | _np.ndarray
    c_init: float

    def tau(self, state: int):
        return self.tau1 if state else self.tau0

    def cinf(self, state: int):
        return self.cinf1 if state else self.cinf0


class _Mapping:
    __slots__ = ()

    def keys(self):
        return tuple(field.name for field in _dc.fields(self))

    def __getitem__(self, key: str):
        if key not in self.keys():
            raise KeyError(key)
        return getattr(self, key)

    def replace(self, **changes) -> _ty.Self:
        return _dc.replace(self, **changes)


@_dc.dataclass(frozen=True, slots=True)
class ChannelParams(_Mapping):
    """The parameter vector of one channel realization.

    tau0/tau1 in seconds, concentrations in µmol/L, drift_slope in
    µmol/L per second and noise_var in (µmol/L)².
    """

    tau0: float
    tau1: float
    cinf0: float
    cinf1: float
    drift_slope: float = 0.0
    noise_var: float = 0.0
    c_init: float = None

    def __post_init__(self):
        if self.c_init is None:
            object.__setattr__(self, "c_init", self.cinf0)
        for name in self.keys():
            value = getattr(self, name)
            if not _math.isfinite(value):
                raise ConfigurationError("must be finite", field=name)
        for name in ("tau0", "tau1", "cinf0", "cinf1", "c_init"):
            if getattr(self, name) <= 0:
                raise ConfigurationError("must be > 0", field=name)
        if self.noise_var < 0:
            raise ConfigurationError("must be >= 0", field="noise_var")
        if self.cinf1 <= self.cinf0:
            _warnings.warn(
                f"cinf1={self.cinf1} does not exceed cinf0={self.cinf0}",
                ChannelWarning,
                stacklevel=3,
            )

    @classmethod
    def from_minutes(
        cls,
        tau0: float,
        tau1: float,
        cinf0: float,
        cinf1: float,
        drift_slope: float = 0.0,
        noise_var: float = 0.0,
        c_init: float = None,
        *,
        noise_std: float = None,
    ):
        """Build from lab units: tau in minutes, drift in µmol/L/min."""
        if noise_std is not None:
            noise_var = noise_std**2
        return cls(
            tau0=tau0 * SECONDS_PER_MINUTE,
            tau1=tau1 * SECONDS_PER_MINUTE,
            cinf0=cinf0,
            cinf1=cinf1,
            drift_slope=drift_slope / SECONDS_PER_MINUTE,
            noise_var=noise_var,
            c_init=c_init,
        )

    def to_minutes(self) -> dict[str, float]:
        return {
            "tau0": self.tau0 / SECONDS_PER_MINUTE,
            "tau1": self.tau1 / SECONDS_PER_MINUTE,
            "cinf0": self.cinf0,
            "cinf1": self.cinf1,
            "drift_slope": self.drift_slope * SECONDS_PER_MINUTE,
            "noise_var": self.noise_var,
            "c_init": self.c_init,
        }

    @property
    def noise_std(self) -> float:
        return _math.sqrt(self.noise_var)

    @property
    def fields(self) -> Fields:
        return Fields(
            self.tau0, self.tau1, self.cinf0, self.cinf1, self.drift_slope, self.c_init
        )

    def at(self, t: float | _np.ndarray) -> Fields:
        return self.fields

    def noise_var_at(self, t: float | _np.ndarray):
        return self.noise_var

    @property
    def c_init_value(self) -> float:
        return self.c_init


@_dc.dataclass(frozen=True, slots=True)
class ParameterRamp(_Mapping):
    """A channel whose parameters move linearly from start to end.

    Times before 0 use start, times after duration use end. The initial
    concentration is always start.c_init.
    """

    start: ChannelParams
    end: ChannelParams
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigurationError("must be > 0", field="duration")

    def _weight(self, t):
        return _np.clip(_np.asarray(t, dtype=float) / self.duration, 0.0, 1.0)

    def at(self, t: float | _np.ndarray) -> Fields:
        w = self._weight(t)
        a, b = self.start, self.end
        lerp = lambda x, y: x + (y - x) * w
        return Fields(
            lerp(a.tau0, b.tau0),
            lerp(a.tau1, b.tau1),
            lerp(a.cinf0, b.cinf0),
            lerp(a.cinf1, b.cinf1),
            lerp(a.drift_slope, b.drift_slope),
            a.c_init,
        )

    def noise_var_at(self, t: float | _np.ndarray):
        w = self._weight(t)
        return self.start.noise_var + (self.end.noise_var - self.start.noise_var) * w

    @property
    def c_init_value(self) -> float:
        return self.start.c_init


ChannelLike = ChannelParams | ParameterRamp


@_dc.dataclass(frozen=True, slots=True)
class LinkConfig(_Mapping):
    """Framing and receiver settings. Durations in seconds."""

    t_symb: float = 60.0
    alpha: float = 0.25
    dt: float = 1.0
    n_pilots: int = 10
    k_frame: int = 40
    t_smooth: float = 30.0
    t_diff: float = 20.0
    gamma: float = 0.5
    reest_period: int = 10
    reest_window: int = 20
    pilot_pattern: tuple[int, ...] = DEFAULT_PILOTS

    def __post_init__(self):
        object.__setattr__(self, "pilot_pattern", as_bits(self.pilot_pattern))
        if not self.dt > 0:
            raise ConfigurationError("must be > 0", field="dt")
        if not self.t_symb > 0:
            raise ConfigurationError("must be > 0", field="t_symb")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("must lie in (0, 1)", field="alpha")
        if not 0 < self.gamma < 1:
            raise ConfigurationError("must lie in (0, 1)", field="gamma")
        if self.t_smooth < 0 or self.t_diff <= 0:
            raise ConfigurationError("smoothing must be >= 0 and differentiation > 0")
        if not 0 < self.n_pilots < self.k_frame:
            raise ConfigurationError(
                f"need 0 < n_pilots < k_frame, got {self.n_pilots}/{self.k_frame}",
                field="n_pilots",
            )
        if self.reest_period < 1 or self.reest_window < 2:
            raise ConfigurationError(
                "reest_period must be >= 1 and reest_window >= 2", field="reest_period"
            )
        # raises on non-integral ratios
        self.samples_per_symbol
        self.on_samples
        self.smooth_samples
        self.diff_samples

    @property
    def samples_per_symbol(self) -> int:
        return sample_count(self.t_symb, self.dt, field="t_symb")

    @property
    def on_samples(self) -> int:
        count = sample_count(self.alpha * self.t_symb, self.dt, field="alpha")
        if count == 0:
            raise ConfigurationError("pulse shorter than one sample", field="alpha")
        return count

    @property
    def t_on(self) -> float:
        return self.on_samples * self.dt

    @property
    def smooth_samples(self) -> int:
        return sample_count(self.t_smooth, self.dt, field="t_smooth")

    @property
    def diff_samples(self) -> int:
        return sample_count(self.t_diff, self.dt, field="t_diff")

    def pilots_for(self, length: int) -> tuple[int, ...]:
        """The pilot pattern repeated or truncated to n_pilots symbols."""
        pattern = self.pilot_pattern or DEFAULT_PILOTS
        return tuple(pattern[i % len(pattern)] for i in range(min(length, self.n_pilots)))


# Fitted parameter sets reported for the two model-verification measurements.
SINGLE_SHOT = ChannelParams.from_minutes(
    tau0=3.19, tau1=1.85, cinf0=1.53, cinf1=1.65, drift_slope=-0.0019
)
MULTI_SHOT = ChannelParams.from_minutes(
    tau0=6.41, tau1=8.40, cinf0=2.83, cinf1=5.77, drift_slope=-0.0039
)
