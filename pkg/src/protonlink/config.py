"""Experiment files.

An experiment is a TOML document in lab units::

    seed = 7
    output_dir = "runs/reference"

    [channel]            # tau in minutes, drift in µmol/L/min
    tau0 = 6.41
    tau1 = 8.40
    cinf0 = 2.83
    cinf1 = 5.77
    drift_slope = -0.0039
    noise_std = 0.0038

    [link]               # seconds
    t_symb = 60
    k_frame = 40

    [scenario]
    kind = "linear"      # or "stationary"
    duration = 120       # minutes
    [scenario.end]       # same keys as [channel]
    tau0 = 3.19

    [bits]
    length = 120         # or: sequence = "1100101000..."

    [timing]
    dark_margin = 0      # seconds before symbol 1
    tail_margin = 0

Unknown keys anywhere are rejected.
"""

import copy as _copy
import dataclasses as _dc
import hashlib as _hashlib
import json as _json
import logging as _logging
import os as _os
import tomllib as _tomllib
import typing as _ty

import numpy as _np

from .errors import ConfigurationError
from .params import SECONDS_PER_MINUTE, ChannelLike, ChannelParams, LinkConfig, ParameterRamp
from .signal import Grid, IlluminationSchedule, build_schedule
from .utils import as_bits, sample_count

_logger = _logging.getLogger(__name__)

CHANNEL_KEYS = ("tau0", "tau1", "cinf0", "cinf1", "drift_slope", "noise_std", "noise_var", "c_init")
LINK_KEYS = tuple(f.name for f in _dc.fields(LinkConfig))
INT_LINK_KEYS = ("n_pilots", "k_frame", "reest_period", "reest_window")
TOP_KEYS = ("seed", "output_dir", "channel", "link", "scenario", "bits", "timing")
SCENARIO_KEYS = ("kind", "duration", "end")
BITS_KEYS = ("sequence", "seed", "length")
TIMING_KEYS = ("dark_margin", "tail_margin")

STATIONARY = "stationary"
LINEAR = "linear"


def _check_keys(table: _ty.Mapping, allowed: _ty.Iterable[str], prefix: str):
    if not isinstance(table, _ty.Mapping):
        raise ConfigurationError("must be a table", field=prefix.rstrip(".") or "<root>")
    for key in table:
        if key not in allowed:
            raise ConfigurationError("unknown key", field=f"{prefix}{key}")


def _number(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", field=field)
    return float(value)


def _integer(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"expected an integer, got {value!r}", field=field)
    return value


def _channel(table: _ty.Mapping, prefix: str, base: ChannelParams = None) -> ChannelParams:
    _check_keys(table, CHANNEL_KEYS, prefix)
    values = dict(base.to_minutes()) if base is not None else {}
    for key, value in table.items():
        values[key] = _number(value, prefix + key)
    if "noise_std" in table and "noise_var" in table:
        raise ConfigurationError("give noise_std or noise_var, not both", field=prefix + "noise_std")
    if "noise_std" in table:
        values["noise_var"] = values.pop("noise_std") ** 2
    missing = [k for k in ("tau0", "tau1", "cinf0", "cinf1") if k not in values]
    if missing:
        raise ConfigurationError("missing", field=prefix + missing[0])
    try:
        return ChannelParams.from_minutes(**values)
    except ConfigurationError as error:
        field = prefix + error.field if error.field else prefix.rstrip(".")
        raise ConfigurationError(str(error).removeprefix(f"{error.field}: "), field=field) from error


def _link(table: _ty.Mapping) -> LinkConfig:
    _check_keys(table, LINK_KEYS, "link.")
    values = {}
    for key, value in table.items():
        if key == "pilot_pattern":
            values[key] = as_bits(value)
        elif key in INT_LINK_KEYS:
            values[key] = _integer(value, "link." + key)
        else:
            values[key] = _number(value, "link." + key)
    try:
        return LinkConfig(**values)
    except ConfigurationError as error:
        field = "link." + error.field if error.field else "link"
        raise ConfigurationError(str(error).removeprefix(f"{error.field}: "), field=field) from error


class Scenario(_ty.NamedTuple):
    """Stationary channel, or a linear ramp to ``end`` over ``duration`` seconds."""

    kind: str = STATIONARY
    end: ChannelParams = None
    duration: float = None


class BitSource(_ty.NamedTuple):
    sequence: tuple[int, ...] = None
    seed: int = None
    length: int = None


@_dc.dataclass(frozen=True)
class ExperimentConfig(object):
    channel: ChannelParams
    link: LinkConfig = LinkConfig()
    scenario: Scenario = Scenario()
    bits: BitSource = BitSource(length=120)
    seed: int = 0
    output_dir: str = "."
    dark_margin: float = 0.0
    tail_margin: float = 0.0
    source: dict = _dc.field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.bits.sequence is None and not self.bits.length:
            raise ConfigurationError("give a sequence or a positive length", field="bits")
        if self.dark_margin < 0 or self.tail_margin < 0:
            raise ConfigurationError("margins must be >= 0", field="timing")
        sample_count(self.dark_margin, self.link.dt, field="timing.dark_margin")
        sample_count(self.tail_margin, self.link.dt, field="timing.tail_margin")
        if self.scenario.kind == LINEAR:
            span = self.symbol_count * self.link.t_symb
            if self.scenario.end is None:
                raise ConfigurationError("linear scenario needs an end channel", field="scenario.end")
            if not self.scenario.duration or self.scenario.duration < span:
                raise ConfigurationError(
                    f"duration must cover the {span / SECONDS_PER_MINUTE:g} min of symbols",
                    field="scenario.duration",
                )
        elif self.scenario.kind != STATIONARY:
            raise ConfigurationError(
                f"expected {STATIONARY!r} or {LINEAR!r}, got {self.scenario.kind!r}",
                field="scenario.kind",
            )

    @classmethod
    def from_dict(cls, data: _ty.Mapping):
        _check_keys(data, TOP_KEYS, "")
        if "channel" not in data:
            raise ConfigurationError("missing", field="channel")
        channel = _channel(data["channel"], "channel.")
        link = _link(data.get("link", {}))

        table = data.get("scenario", {})
        _check_keys(table, SCENARIO_KEYS, "scenario.")
        kind = table.get("kind", STATIONARY)
        end = None
        if "end" in table:
            end = _channel(table["end"], "scenario.end.", base=channel)
        duration = None
        if "duration" in table:
            duration = _number(table["duration"], "scenario.duration") * SECONDS_PER_MINUTE
        scenario = Scenario(kind, end, duration)

        table = data.get("bits", {"length": 120})
        _check_keys(table, BITS_KEYS, "bits.")
        if "sequence" in table and "length" in table:
            raise ConfigurationError("give a sequence or a length, not both", field="bits")
        bits = BitSource(
            as_bits(table["sequence"]) if "sequence" in table else None,
            _integer(table["seed"], "bits.seed") if "seed" in table else None,
            _integer(table["length"], "bits.length") if "length" in table else None,
        )

        table = data.get("timing", {})
        _check_keys(table, TIMING_KEYS, "timing.")
        return cls(
            channel=channel,
            link=link,
            scenario=scenario,
            bits=bits,
            seed=_integer(data.get("seed", 0), "seed"),
            output_dir=str(data.get("output_dir", ".")),
            dark_margin=_number(table.get("dark_margin", 0.0), "timing.dark_margin"),
            tail_margin=_number(table.get("tail_margin", 0.0), "timing.tail_margin"),
            source=_copy.deepcopy(dict(data)),
        )

    @classmethod
    def loads(cls, text: str):
        try:
            data = _tomllib.loads(text)
        except _tomllib.TOMLDecodeError as error:
            raise ConfigurationError(f"not valid TOML: {error}") from error
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | _os.PathLike, overrides: _ty.Iterable[str] = ()):
        return cls.from_dict(apply_overrides(load_raw(path), overrides))

    def to_dict(self) -> dict:
        """The resolved configuration in file units; from_dict(to_dict()) == self."""

        def channel(params: ChannelParams):
            values = params.to_minutes()
            return {k: values[k] for k in ("tau0", "tau1", "cinf0", "cinf1", "drift_slope", "noise_var", "c_init")}

        data = {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "channel": channel(self.channel),
            "link": {k: self.link[k] for k in LINK_KEYS},
            "scenario": {"kind": self.scenario.kind},
            "timing": {"dark_margin": self.dark_margin, "tail_margin": self.tail_margin},
        }
        data["link"]["pilot_pattern"] = list(self.link.pilot_pattern)
        if self.scenario.end is not None:
            data["scenario"]["end"] = channel(self.scenario.end)
        if self.scenario.duration is not None:
            data["scenario"]["duration"] = self.scenario.duration / SECONDS_PER_MINUTE
        if self.bits.sequence is not None:
            data["bits"] = {"sequence": "".join(map(str, self.bits.sequence))}
        else:
            data["bits"] = {"length": self.bits.length}
            if self.bits.seed is not None:
                data["bits"]["seed"] = self.bits.seed
        return data

    def document(self) -> dict:
        """The table this config was parsed from, or to_dict() if it was built in code.

        Parsing the document again reproduces the config bit for bit.
        """
        data = _copy.deepcopy(self.source) if self.source is not None else self.to_dict()
        data["output_dir"] = self.output_dir
        return data

    def canonical_json(self) -> str:
        """Sorted, compact JSON of everything but output_dir."""
        data = self.to_dict()
        data.pop("output_dir")
        return _json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return _hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return _dc.replace(self, **changes)

    def seeds(self) -> tuple[_np.random.SeedSequence, _np.random.SeedSequence]:
        """(bit stream, noise stream) children of the run seed."""
        bits_seq, noise_seq = _np.random.SeedSequence(self.seed).spawn(2)
        if self.bits.seed is not None:
            bits_seq = _np.random.SeedSequence(self.bits.seed)
        return bits_seq, noise_seq

    @property
    def symbol_count(self) -> int:
        if self.bits.sequence is not None:
            return len(self.bits.sequence)
        return self.bits.length

    def transmitted_bits(self) -> tuple[int, ...]:
        """Explicit bits, or random bits with the pilot pattern at every frame start."""
        if self.bits.sequence is not None:
            return self.bits.sequence
        rng = _np.random.Generator(_np.random.PCG64(self.seeds()[0]))
        bits = rng.integers(0, 2, size=self.bits.length).tolist()
        pilots = self.link.pilots_for(self.link.n_pilots)
        for frame in range(0, len(bits), self.link.k_frame):
            for i, bit in enumerate(pilots):
                if frame + i < len(bits):
                    bits[frame + i] = bit
        return tuple(bits)

    @property
    def start(self) -> int:
        """Trace sample index of symbol 1."""
        return sample_count(self.dark_margin, self.link.dt, field="timing.dark_margin")

    def schedule(self, bits: _ty.Iterable[int] = None) -> IlluminationSchedule:
        bits = self.transmitted_bits() if bits is None else bits
        schedule = build_schedule(bits, self.link)
        if self.dark_margin or self.tail_margin:
            schedule = schedule.with_margins(self.dark_margin, self.tail_margin)
        return schedule

    def grid(self, schedule: IlluminationSchedule = None) -> Grid:
        return Grid.covering(schedule or self.schedule(), self.link.dt)

    def channel_model(self) -> ChannelLike:
        if self.scenario.kind == LINEAR:
            return ParameterRamp(self.channel, self.scenario.end, self.scenario.duration)
        return self.channel


def apply_overrides(data: dict, assignments: _ty.Iterable[str]) -> dict:
    """Apply ``dotted.key=toml-value`` assignments to a raw config table."""
    for assignment in assignments:
        key, sep, raw = assignment.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"expected key=value, got {assignment!r}")
        try:
            value = _tomllib.loads(f"value = {raw.strip()}")["value"]
        except _tomllib.TOMLDecodeError:
            value = raw.strip()
        *parents, leaf = key.strip().split(".")
        table = data
        for parent in parents:
            table = table.setdefault(parent, {})
            if not isinstance(table, dict):
                raise ConfigurationError("is not a table", field=parent)
        table[leaf] = value
    return data


def load_raw(path: str | _os.PathLike) -> dict:
    with open(path, "rb") as fh:
        try:
            return _tomllib.load(fh)
        except _tomllib.TOMLDecodeError as error:
            raise ConfigurationError(f"{path} is not valid TOML: {error}") from error
