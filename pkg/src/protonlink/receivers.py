"""The two SymbolDetector implementations used by the link schemes."""

import logging as _logging
import typing as _ty

from .detection import (
    DetectorState,
    DiffSignal,
    SymbolWindow,
    detection_metric,
    diff_signal,
    estimate_threshold,
    ml_detect,
    threshold_detect,
)
from .errors import DomainError, ThresholdUndefinedError
from .estimation import Bounds, FitRequest, FitResult, fit
from .params import ChannelParams, LinkConfig
from .protocols.detector import Decision, SymbolDetector
from .signal import Trace

_logger = _logging.getLogger(__name__)


class MlReceiver(SymbolDetector):
    """Least-squares channel fit followed by symbol-by-symbol ML decisions."""

    __slots__ = ("cfg", "offset", "bounds", "params", "last_fit", "state")
    name = "ml"

    def __init__(self, cfg: LinkConfig, offset: int = 0, bounds: Bounds = None):
        self.cfg = cfg
        self.offset = offset
        self.bounds = bounds
        self.params: ChannelParams = None
        self.last_fit: FitResult = None
        self.state: DetectorState = None

    def _window(self, first: int, count: int) -> tuple[int, int]:
        n = self.cfg.samples_per_symbol
        return self.offset + first * n, self.offset + (first + count) * n

    def train(self, trace: Trace, bits: _ty.Sequence[int], first: int) -> bool:
        window = self._window(first, len(bits))
        init = None
        if self.params is not None and window[0] < len(trace):
            init = self.params.replace(c_init=float(trace.samples[window[0]]))
        try:
            req = FitRequest(trace, bits, window, init, self.bounds, cfg=self.cfg)
            result = fit(req)
        except DomainError as error:
            _logger.info("estimation over symbols %d+%d failed: %s", first, len(bits), error)
            if init is not None:
                # a restart at this window begins from the measured level
                self.params = init
            return False
        self.params = result.params
        self.last_fit = result
        return True

    def start(self, bits: _ty.Sequence[int], first: int):
        if self.params is None:
            raise DomainError("ML receiver has no channel estimate")
        self.state = DetectorState(
            self.params,
            self.cfg,
            origin=self._window(first, 0)[0],
            first_k=first + 1,
            history=bits,
        )

    def decide(self, trace: Trace, k: int, *, true_bit: int = None) -> Decision:
        window = SymbolWindow.of(k + 1, self.cfg, self.offset)
        bit, cost0, cost1 = ml_detect(self.state, trace, window, true_bit=true_bit)
        return Decision(bit, cost0=cost0, cost1=cost1)

    def estimate(self) -> ChannelParams:
        return self.params


class ThresholdReceiver(SymbolDetector):
    """Peak-slope metric compared against a pilot-trained threshold."""

    __slots__ = ("cfg", "offset", "eta", "_trace", "_diff")
    name = "threshold"

    def __init__(self, cfg: LinkConfig, offset: int = 0):
        self.cfg = cfg
        self.offset = offset
        self.eta: float = None
        self._trace: Trace = None
        self._diff: DiffSignal = None

    def diff(self, trace: Trace) -> DiffSignal:
        if self._trace is not trace:
            self._diff = diff_signal(trace, self.cfg)
            self._trace = trace
        return self._diff

    def metric(self, trace: Trace, k: int) -> float:
        window = SymbolWindow.of(k + 1, self.cfg, self.offset)
        return detection_metric(self.diff(trace), window)

    def train(self, trace: Trace, bits: _ty.Sequence[int], first: int) -> bool:
        q = [self.metric(trace, k) for k in range(first, first + len(bits))]
        try:
            self.eta = estimate_threshold(q, bits, self.cfg.gamma)
        except ThresholdUndefinedError as error:
            _logger.info("threshold over symbols %d+%d undefined: %s", first, len(bits), error)
            return False
        return True

    def start(self, bits: _ty.Sequence[int], first: int):
        if self.eta is None:
            raise DomainError("threshold receiver has no threshold")

    def decide(self, trace: Trace, k: int, *, true_bit: int = None) -> Decision:
        q = self.metric(trace, k)
        return Decision(threshold_detect(q, self.eta), metric=q, threshold=self.eta)

    def estimate(self) -> float:
        return self.eta


RECEIVERS: dict[str, type[SymbolDetector]] = {
    MlReceiver.name: MlReceiver,
    ThresholdReceiver.name: ThresholdReceiver,
}


def make_receiver(
    detector: str | SymbolDetector, cfg: LinkConfig, offset: int = 0
) -> SymbolDetector:
    if not isinstance(detector, str):
        return detector
    try:
        cls = RECEIVERS[detector]
    except KeyError:
        raise DomainError(f"unknown detector {detector!r}, expected one of {sorted(RECEIVERS)}")
    return cls(cfg, offset)
