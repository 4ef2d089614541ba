"""Framing and adaptive estimation schemes.

pilot-based  frames of K symbols, each opened by N pilots that retrain the
             receiver.
data-aided   a single pilot block, then retraining every reest_period
             symbols on the previous reest_window symbols, detected
             symbols taken as truth.
fixed        a single pilot block and no retraining (the "outdated"
             baseline for ML, the fixed threshold for the slope detector).
genie        ML only: each frame is fitted on all of its true symbols and
             detection feeds back true symbols.
"""

import enum as _enum
import logging as _logging
import typing as _ty

import numpy as _np
import pandas as _pd

from .errors import DomainError
from .params import ChannelParams, LinkConfig
from .protocols.detector import Decision, SymbolDetector
from .receivers import MlReceiver, make_receiver
from .signal import Trace, build_schedule, evaluate
from .utils import as_bits, pilot_mask

_logger = _logging.getLogger(__name__)


class Scheme(str, _enum.Enum):
    PilotBased = "pilot-based"
    DataAided = "data-aided"
    Fixed = "fixed"
    Genie = "genie"


class LinkEvent(_enum.Enum):
    FrameStart = 1
    PilotFit = 2
    FitFailed = 3
    ReEstimated = 4
    ReEstimationSkipped = 5
    ThresholdUpdated = 6
    Decided = 7


class FramePlan(_ty.NamedTuple):
    scheme: Scheme
    k_frame: int
    n_pilots: int
    reest_period: int = 0
    reest_window: int = 0

    @classmethod
    def for_scheme(cls, scheme: Scheme | str, cfg: LinkConfig):
        scheme = Scheme(scheme)
        if scheme is Scheme.DataAided:
            return cls(scheme, cfg.k_frame, cfg.n_pilots, cfg.reest_period, cfg.reest_window)
        return cls(scheme, cfg.k_frame, cfg.n_pilots)

    def pilot_positions(self, total: int) -> list[int]:
        """0-based indices of the pilot symbols in a run of ``total`` symbols."""
        if self.scheme in (Scheme.PilotBased, Scheme.Genie):
            return [
                f + i
                for f in range(0, total, self.k_frame)
                for i in range(self.n_pilots)
                if f + i < total
            ]
        return list(range(min(self.n_pilots, total)))

    def payload_count(self, total: int) -> int:
        return total - len(self.pilot_positions(total))


class SymbolRecord(_ty.NamedTuple):
    k: int
    bit: int
    truth: int
    pilot: bool
    metric: float = None
    cost0: float = None
    cost1: float = None
    threshold: float = None
    epoch: int = None


class Epoch(_ty.NamedTuple):
    """An estimate trained on symbols [origin, origin+span), used from valid_from.

    Symbol indices are 0-based; time is the trace time at which valid_from starts.
    """

    valid_from: int
    time: float
    origin: int
    span: int
    estimate: ChannelParams | float


class LinkReport(_ty.NamedTuple):
    scheme: str
    detector: str
    decisions: tuple[int, ...]
    per_symbol: tuple[SymbolRecord, ...]
    epochs: tuple[Epoch, ...]
    ber: tuple[int, int]
    flagged: tuple[int, ...] = ()

    @property
    def param_history(self) -> list[tuple[float, ChannelParams | float]]:
        """(re-estimation time in seconds, estimate) pairs."""
        return [(e.time, e.estimate) for e in self.epochs]

    @property
    def ber_ratio(self) -> float:
        errors, total = self.ber
        return errors / total if total else 0.0

    def to_frame(self) -> _pd.DataFrame:
        return _pd.DataFrame(self.per_symbol, columns=SymbolRecord._fields)

    def to_dict(self) -> dict:
        def estimate(value):
            if isinstance(value, ChannelParams):
                return value.to_minutes()
            return value

        return {
            "scheme": self.scheme,
            "detector": self.detector,
            "ber": {"errors": self.ber[0], "total": self.ber[1]},
            "decisions": "".join(map(str, self.decisions)),
            "flagged": list(self.flagged),
            "epochs": [
                {
                    "valid_from": e.valid_from,
                    "time": e.time,
                    "origin": e.origin,
                    "span": e.span,
                    "estimate": estimate(e.estimate),
                }
                for e in self.epochs
            ],
        }


def ber(
    decisions: _ty.Sequence[int], truth: _ty.Sequence[int], mask: _ty.Sequence[bool] = None
) -> tuple[int, int]:
    """(errors, count) over the positions not flagged in the pilot mask."""
    decisions = _np.asarray(as_bits(decisions))
    truth = _np.asarray(as_bits(truth))
    if decisions.shape != truth.shape:
        raise DomainError(f"{decisions.size} decisions for {truth.size} symbols")
    keep = _np.ones(truth.size, dtype=bool)
    if mask is not None:
        mask = _np.asarray(mask, dtype=bool)
        if mask.shape != truth.shape:
            raise DomainError("pilot mask length differs from the sequence")
        keep = ~mask
    return int(_np.count_nonzero(decisions[keep] != truth[keep])), int(keep.sum())


LinkHook = _ty.Callable[[LinkEvent, int, object], None]


class _Session(object):
    """Book-keeping for one run: decisions, epochs and the event stream."""

    __slots__ = (
        "plan",
        "cfg",
        "start",
        "receiver",
        "trace",
        "truth",
        "decisions",
        "records",
        "epochs",
        "flagged",
        "_hook",
    )
    EVENT_LOG_FORMAT = "[{event}] k={k} t={t} detail={detail}"

    def __init__(
        self,
        plan: FramePlan,
        cfg: LinkConfig,
        receiver: SymbolDetector,
        trace: Trace,
        truth: tuple[int, ...],
        *,
        start: int = 0,
        hook: LinkHook = None,
    ):
        self.plan = plan
        self.cfg = cfg
        self.start = start
        self.receiver = receiver
        self.trace = trace
        self.truth = truth
        self.decisions: list[int] = [None] * len(truth)
        self.records: list[SymbolRecord] = []
        self.epochs: list[Epoch] = []
        self.flagged: list[int] = []
        self._hook = hook

    def time_of(self, k: int) -> float:
        """Trace time at which 0-based symbol k starts."""
        return self.trace.t_start + (self.start + k * self.cfg.samples_per_symbol) * self.trace.dt

    def log(self, msg: str, **kwargs):
        _logger.debug(msg.format_map(kwargs))

    def hook(self, event: LinkEvent, k: int, detail: object = None):
        """Report an event about 0-based symbol k; hooks see the 1-based number."""
        if self._hook:
            self._hook(event, k + 1, detail)
        self.log(self.EVENT_LOG_FORMAT, event=event.name, k=k + 1, t=self.time_of(k), detail=detail)

    def known(self, first: int, stop: int) -> tuple[int, ...]:
        """Pilots and already decided symbols in [first, stop)."""
        return tuple(self.decisions[k] for k in range(first, stop))

    def train(self, bits: _ty.Sequence[int], first: int, valid_from: int, event: LinkEvent) -> bool:
        if not self.receiver.refresh(self.trace, bits, first):
            self.flagged.append(valid_from + 1)
            self.hook(LinkEvent.FitFailed, valid_from, first + 1)
            if not self.epochs:
                return False
            # keep the previous estimate
            self.receiver.start(bits, first)
            return True
        estimate = self.receiver.estimate()
        self.epochs.append(Epoch(valid_from, self.time_of(valid_from), first, len(bits), estimate))
        self.hook(event, valid_from, estimate)
        if not isinstance(estimate, ChannelParams):
            self.hook(LinkEvent.ThresholdUpdated, valid_from, estimate)
        return True

    def pilots(self, first: int, stop: int):
        for k in range(first, stop):
            self.decisions[k] = self.truth[k]
            self.records.append(SymbolRecord(k + 1, self.truth[k], self.truth[k], True))

    def decide(self, k: int, *, genie: bool = False):
        decision: Decision = self.receiver.decide(
            self.trace, k, true_bit=self.truth[k] if genie else None
        )
        self.decisions[k] = decision.bit
        self.records.append(
            SymbolRecord(
                k + 1,
                decision.bit,
                self.truth[k],
                False,
                decision.metric,
                decision.cost0,
                decision.cost1,
                decision.threshold,
                len(self.epochs) - 1,
            )
        )
        self.hook(LinkEvent.Decided, k, decision.bit)

    def undecidable(self, first: int, stop: int):
        """Symbols without any estimate are declared 0."""
        for k in range(first, stop):
            self.decisions[k] = 0
            self.records.append(SymbolRecord(k + 1, 0, self.truth[k], False))

    def report(self) -> LinkReport:
        mask = pilot_mask(len(self.truth), self.plan.pilot_positions(len(self.truth)))
        return LinkReport(
            scheme=self.plan.scheme.value,
            detector=self.receiver.name,
            decisions=tuple(self.decisions),
            per_symbol=tuple(self.records),
            epochs=tuple(self.epochs),
            ber=ber(self.decisions, self.truth, mask),
            flagged=tuple(self.flagged),
        )


def _prepare(trace: Trace, true_bits, cfg: LinkConfig, start: int) -> tuple[int, ...]:
    truth = as_bits(true_bits)
    if not truth:
        raise DomainError("no symbols to detect")
    needed = start + len(truth) * cfg.samples_per_symbol
    if needed > len(trace):
        raise DomainError(f"{len(truth)} symbols need {needed} samples, trace has {len(trace)}")
    if len(truth) <= cfg.n_pilots:
        raise DomainError(f"{len(truth)} symbols leave no payload after {cfg.n_pilots} pilots")
    return truth


def run_pilot_based(
    trace: Trace,
    true_bits: _ty.Iterable[int],
    cfg: LinkConfig,
    detector: str | SymbolDetector = "ml",
    *,
    start: int = 0,
    hook: LinkHook = None,
) -> LinkReport:
    truth = _prepare(trace, true_bits, cfg, start)
    plan = FramePlan.for_scheme(Scheme.PilotBased, cfg)
    session = _Session(
        plan, cfg, make_receiver(detector, cfg, start), trace, truth, start=start, hook=hook
    )
    total = len(truth)
    for frame in range(0, total, cfg.k_frame):
        stop = min(frame + cfg.k_frame, total)
        pilots = min(frame + cfg.n_pilots, stop)
        session.hook(LinkEvent.FrameStart, frame)
        session.pilots(frame, pilots)
        if not session.train(truth[frame:pilots], frame, frame, LinkEvent.PilotFit):
            session.undecidable(pilots, stop)
            continue
        for k in range(pilots, stop):
            session.decide(k)
    return session.report()


def run_data_aided(
    trace: Trace,
    true_bits: _ty.Iterable[int],
    cfg: LinkConfig,
    detector: str | SymbolDetector = "ml",
    *,
    start: int = 0,
    hook: LinkHook = None,
) -> LinkReport:
    truth = _prepare(trace, true_bits, cfg, start)
    plan = FramePlan.for_scheme(Scheme.DataAided, cfg)
    session = _Session(
        plan, cfg, make_receiver(detector, cfg, start), trace, truth, start=start, hook=hook
    )
    total, n = len(truth), cfg.n_pilots
    session.pilots(0, n)
    if not session.train(truth[:n], 0, 0, LinkEvent.PilotFit):
        session.undecidable(n, total)
        return session.report()
    for k in range(n, total):
        if k > n and (k - n) % cfg.reest_period == 0:
            first = max(0, k - cfg.reest_window)
            bits = session.known(first, k)
            if 0 in bits and 1 in bits:
                session.train(bits, first, k, LinkEvent.ReEstimated)
            else:
                session.hook(LinkEvent.ReEstimationSkipped, k, first + 1)
        session.decide(k)
    return session.report()


def run_fixed(
    trace: Trace,
    true_bits: _ty.Iterable[int],
    cfg: LinkConfig,
    detector: str | SymbolDetector = "threshold",
    *,
    start: int = 0,
    hook: LinkHook = None,
) -> LinkReport:
    truth = _prepare(trace, true_bits, cfg, start)
    plan = FramePlan.for_scheme(Scheme.Fixed, cfg)
    session = _Session(
        plan, cfg, make_receiver(detector, cfg, start), trace, truth, start=start, hook=hook
    )
    n = cfg.n_pilots
    session.pilots(0, n)
    if not session.train(truth[:n], 0, 0, LinkEvent.PilotFit):
        session.undecidable(n, len(truth))
        return session.report()
    for k in range(n, len(truth)):
        session.decide(k)
    return session.report()


def run_genie(
    trace: Trace,
    true_bits: _ty.Iterable[int],
    cfg: LinkConfig,
    *,
    start: int = 0,
    hook: LinkHook = None,
) -> LinkReport:
    truth = _prepare(trace, true_bits, cfg, start)
    plan = FramePlan.for_scheme(Scheme.Genie, cfg)
    session = _Session(plan, cfg, MlReceiver(cfg, start), trace, truth, start=start, hook=hook)
    total = len(truth)
    for frame in range(0, total, cfg.k_frame):
        stop = min(frame + cfg.k_frame, total)
        pilots = min(frame + cfg.n_pilots, stop)
        session.hook(LinkEvent.FrameStart, frame)
        session.pilots(frame, pilots)
        if not session.train(truth[frame:stop], frame, frame, LinkEvent.PilotFit):
            session.undecidable(pilots, stop)
            continue
        session.receiver.start(truth[frame:pilots], frame)
        for k in range(pilots, stop):
            session.decide(k, genie=True)
    return session.report()


RUNNERS = {
    Scheme.PilotBased: run_pilot_based,
    Scheme.DataAided: run_data_aided,
    Scheme.Fixed: run_fixed,
}


def run(
    scheme: Scheme | str,
    trace: Trace,
    true_bits: _ty.Iterable[int],
    cfg: LinkConfig,
    detector: str = "ml",
    *,
    start: int = 0,
    hook: LinkHook = None,
) -> LinkReport:
    scheme = Scheme(scheme)
    if scheme is Scheme.Genie:
        if detector != "ml":
            raise DomainError("the genie benchmark is defined for the ML detector only")
        return run_genie(trace, true_bits, cfg, start=start, hook=hook)
    return RUNNERS[scheme](trace, true_bits, cfg, detector, start=start, hook=hook)


def analytic_signal(
    epochs: _ty.Sequence[Epoch],
    bits: _ty.Iterable[int],
    cfg: LinkConfig,
    trace: Trace,
    *,
    start: int = 0,
) -> tuple[_np.ndarray, _np.ndarray]:
    """Model curve implied by a sequence of ML estimates, and its per-symbol MSE.

    Each epoch's channel runs from its training origin over ``bits``; its
    samples are used from valid_from up to the next epoch. Samples before the
    first epoch are NaN.
    """
    bits = as_bits(bits)
    n = cfg.samples_per_symbol
    curve = _np.full(len(bits) * n, _np.nan)
    for idx, epoch in enumerate(epochs):
        if not isinstance(epoch.estimate, ChannelParams):
            raise DomainError("analytic signals need channel parameter estimates")
        until = epochs[idx + 1].valid_from if idx + 1 < len(epochs) else len(bits)
        if until <= epoch.valid_from:
            continue
        schedule = build_schedule(bits[epoch.origin : until], cfg)
        times = cfg.dt * _np.arange((epoch.valid_from - epoch.origin) * n, (until - epoch.origin) * n)
        curve[epoch.valid_from * n : until * n] = evaluate(schedule, epoch.estimate, times)
    measured = trace.samples[start : start + curve.size]
    mismatch = _np.nanmean(((measured - curve) ** 2).reshape(len(bits), n), axis=1)
    return curve, mismatch


def outdated_signal(
    report: LinkReport, bits: _ty.Iterable[int], cfg: LinkConfig, trace: Trace, *, start: int = 0
) -> tuple[_np.ndarray, _np.ndarray]:
    """The first estimate of a run applied to the true bits for the whole run."""
    if not report.epochs:
        raise DomainError("report has no estimate")
    first = report.epochs[0]
    return analytic_signal([first], bits, cfg, trace, start=start)


def parameter_table(report: LinkReport) -> _pd.DataFrame:
    """One row per epoch with the estimate in lab units."""
    rows = []
    for epoch in report.epochs:
        row = {"valid_from": epoch.valid_from, "origin": epoch.origin, "span": epoch.span}
        if isinstance(epoch.estimate, ChannelParams):
            row.update(epoch.estimate.to_minutes())
        else:
            row["threshold"] = epoch.estimate
        rows.append(row)
    return _pd.DataFrame(rows)
