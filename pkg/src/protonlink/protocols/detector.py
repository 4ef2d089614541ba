import typing as _ty

from .. import utils as _utils

if _ty.TYPE_CHECKING:
    from ..signal import Trace

__all__ = ("Decision", "SymbolDetector")


class Decision(_ty.NamedTuple):
    """One symbol decision and the quantities it was taken on."""

    bit: int
    metric: float = None
    cost0: float = None
    cost1: float = None
    threshold: float = None


class SymbolDetector(_ty.Protocol):
    """Receiver that is trained on known symbols and then decides new ones.

    Symbols are 0-based indices into the transmitted sequence; symbol 0
    starts at trace sample ``offset``.
    """

    __slots__ = ()

    name: str

    @_utils.notimplemented
    def train(self, trace: "Trace", bits: _ty.Sequence[int], first: int) -> bool:
        """
        Estimate from symbols [first, first+len(bits)) assumed to carry bits.
        Returns False and keeps the previous estimate if that is impossible.
        """
        ...

    @_utils.notimplemented
    def start(self, bits: _ty.Sequence[int], first: int):
        """
        Restart decision feedback: symbols from first on carried bits, the next
        decision is symbol first+len(bits).
        """
        ...

    @_utils.notimplemented
    def decide(self, trace: "Trace", k: int, *, true_bit: int = None) -> Decision:
        """
        Decide symbol k. A given true_bit feeds back instead of the decision.
        """
        ...

    @_utils.notimplemented
    def estimate(self) -> object:
        """Current estimate: channel parameters or threshold."""
        ...

    def refresh(self, trace: "Trace", bits: _ty.Sequence[int], first: int) -> bool:
        """
        Train on the given symbols and, on success, resume right after them.
        """
        trained = self.train(trace, bits, first)
        if trained:
            self.start(bits, first)
        return trained

    def run(
        self,
        trace: "Trace",
        first: int,
        count: int,
        truth: _ty.Sequence[int] = None,
        *,
        genie: bool = False,
    ) -> list[Decision]:
        """
        Decide ``count`` consecutive symbols starting at ``first``.
        """
        decisions = []
        for k in range(first, first + count):
            true_bit = truth[k] if genie else None
            decisions.append(self.decide(trace, k, true_bit=true_bit))
        return decisions
