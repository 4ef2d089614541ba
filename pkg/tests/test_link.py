import json

import numpy as np
import pytest

import src.protonlink as protonlink
from src.protonlink import link, signal
from src.protonlink.link import FramePlan, LinkEvent, Scheme
from src.protonlink.params import MULTI_SHOT, LinkConfig
from src.protonlink.signal import Grid

cfg = LinkConfig()
NOISY = MULTI_SHOT.replace(noise_var=0.0038**2)


def frame_bits(total: int, config: LinkConfig = cfg, seed: int = 0) -> tuple[int, ...]:
    """Random payload with the pilot pattern at every frame start."""
    bits = np.random.default_rng(seed).integers(0, 2, size=total)
    pilots = config.pilots_for(config.n_pilots)
    for frame in range(0, total, config.k_frame):
        for i, bit in enumerate(pilots):
            if frame + i < total:
                bits[frame + i] = bit
    return tuple(int(b) for b in bits)


def bits_trace(bits, params=MULTI_SHOT, seed: int = 0, margin: float = 0.0, config=cfg):
    schedule = signal.build_schedule(bits, config)
    if margin:
        schedule = schedule.with_margins(margin)
    return signal.simulate(schedule, params, Grid.covering(schedule, config.dt), seed)


class Recorder(object):
    def __init__(self):
        self.events = []

    def __call__(self, event: LinkEvent, k: int, detail: object):
        self.events.append((event, k, detail))

    def of(self, event: LinkEvent):
        return [(k, detail) for e, k, detail in self.events if e is event]


@pytest.mark.parametrize(
    "scheme,total,k_frame,payload",
    [
        (Scheme.PilotBased, 120, 40, 90),
        (Scheme.DataAided, 120, 40, 110),
        (Scheme.PilotBased, 600, 40, 450),
        (Scheme.DataAided, 600, 120, 590),
        (Scheme.Fixed, 600, 40, 590),
        (Scheme.Genie, 120, 40, 90),
    ],
)
def test_frame_plan_payload(scheme: Scheme, total: int, k_frame: int, payload: int):
    plan = FramePlan.for_scheme(scheme, LinkConfig(k_frame=k_frame))
    assert plan.payload_count(total) == payload


@pytest.mark.parametrize("seed", range(20))
def test_frame_plan_accounting(seed: int):
    rng = np.random.default_rng(seed)
    k_frame = int(rng.integers(2, 150))
    n_pilots = int(rng.integers(1, k_frame))
    total = int(rng.integers(n_pilots + 1, 1000))
    config = LinkConfig(k_frame=k_frame, n_pilots=n_pilots)
    pilot_based = FramePlan.for_scheme(Scheme.PilotBased, config)
    expected = sum(
        min(k_frame, total - frame) - min(n_pilots, total - frame)
        for frame in range(0, total, k_frame)
    )
    assert pilot_based.payload_count(total) == expected
    assert FramePlan.for_scheme(Scheme.DataAided, config).payload_count(total) == total - n_pilots


def test_ber_counts_payload_only():
    truth = frame_bits(120)
    plan = FramePlan.for_scheme(Scheme.PilotBased, cfg)
    mask = protonlink.utils.pilot_mask(120, plan.pilot_positions(120))
    assert link.ber(truth, truth, mask) == (0, 90)
    flipped = list(truth)
    flipped[15] ^= 1
    assert link.ber(flipped, truth, mask) == (1, 90)
    pilots_flipped = [bit ^ 1 if mask[k] else bit for k, bit in enumerate(truth)]
    assert link.ber(pilots_flipped, truth, mask) == (0, 90)


def test_ber_length_mismatch():
    with pytest.raises(protonlink.DomainError):
        link.ber([0, 1], [0, 1, 1])


def test_pilot_based_ml_noise_free():
    truth = frame_bits(120, seed=1)
    recorder = Recorder()
    report = link.run_pilot_based(bits_trace(truth), truth, cfg, "ml", hook=recorder)
    assert report.ber == (0, 90)
    assert report.decisions == truth
    assert [k for k, _ in recorder.of(LinkEvent.FrameStart)] == [1, 41, 81]
    assert [time for time, _ in report.param_history] == [0.0, 2400.0, 4800.0]
    assert all(isinstance(estimate, protonlink.ChannelParams) for _, estimate in report.param_history)
    assert len(recorder.of(LinkEvent.Decided)) == 90


def test_data_aided_ml_noise_free_matches_pilot_based():
    truth = frame_bits(120, seed=2)
    trace = bits_trace(truth)
    pilot_based = link.run_pilot_based(trace, truth, cfg, "ml")
    data_aided = link.run_data_aided(trace, truth, cfg, "ml")
    assert data_aided.ber == (0, 110)
    assert data_aided.decisions == pilot_based.decisions == truth
    assert [e.valid_from for e in data_aided.epochs] == [0] + list(range(20, 120, 10))
    assert data_aided.epochs[1].origin == 0 and data_aided.epochs[2].origin == 10


def test_genie_noise_free():
    truth = frame_bits(120, seed=3)
    report = link.run(Scheme.Genie, bits_trace(truth), truth, cfg)
    assert report.ber == (0, 90)
    assert report.scheme == "genie"


def test_genie_needs_ml():
    truth = frame_bits(120)
    with pytest.raises(protonlink.DomainError):
        link.run("genie", bits_trace(truth), truth, cfg, "threshold")


def test_failed_pilot_fit_flags_frame():
    truth = list(frame_bits(120, seed=4))
    truth[:10] = [0] * 10
    recorder = Recorder()
    report = link.run_pilot_based(bits_trace(truth), truth, cfg, "ml", hook=recorder)
    assert report.flagged == (1,)
    assert recorder.of(LinkEvent.FitFailed) == [(1, 1)]
    assert report.decisions[10:40] == (0,) * 30
    assert report.ber == (sum(truth[10:40]), 90)
    assert [e.valid_from for e in report.epochs] == [40, 80]


def test_data_aided_skips_single_class_windows():
    truth = tuple(cfg.pilots_for(10)) + (0,) * 30 + (1, 0, 1, 1, 0, 0, 1, 0, 1, 0)
    recorder = Recorder()
    report = link.run_data_aided(bits_trace(truth), truth, cfg, "ml", hook=recorder)
    assert report.decisions == truth
    assert recorder.of(LinkEvent.ReEstimationSkipped) == [(31, 11), (41, 21)]
    assert [k for k, _ in recorder.of(LinkEvent.ReEstimated)] == [21]


def test_threshold_denominators_600_symbols():
    truth = frame_bits(600, seed=5)
    trace = bits_trace(truth, NOISY, seed=5)
    assert link.run_pilot_based(trace, truth, cfg, "threshold").ber[1] == 450
    long_frames = LinkConfig(k_frame=120)
    assert link.run_data_aided(trace, truth, long_frames, "threshold").ber[1] == 590


def test_threshold_reports_thresholds():
    truth = frame_bits(120, seed=6)
    recorder = Recorder()
    trace = bits_trace(truth, NOISY, seed=6)
    report = link.run_pilot_based(trace, truth, cfg, "threshold", hook=recorder)
    assert len(recorder.of(LinkEvent.ThresholdUpdated)) == 3
    payload = [r for r in report.per_symbol if not r.pilot]
    assert all(r.threshold == report.epochs[r.epoch].estimate for r in payload)
    assert all(r.metric is not None for r in payload)
    frame = link.parameter_table(report)
    assert list(frame["threshold"]) == [e.estimate for e in report.epochs]


def test_dark_margin_offsets_symbol_times():
    truth = frame_bits(120, seed=7)
    trace = bits_trace(truth, NOISY, seed=7, margin=300.0)
    report = link.run_pilot_based(trace, truth, cfg, "threshold", start=300)
    assert [time for time, _ in report.param_history] == [300.0, 2700.0, 5100.0]
    assert report.ber[1] == 90


def test_run_rejects_short_trace():
    truth = frame_bits(120)
    trace = bits_trace(truth[:60])
    with pytest.raises(protonlink.DomainError):
        link.run_pilot_based(trace, truth, cfg, "threshold")


def test_link_report_deterministic():
    truth = frame_bits(120, seed=8)
    trace = bits_trace(truth, NOISY, seed=8)
    first = link.run_data_aided(trace, truth, cfg, "ml")
    second = link.run_data_aided(trace, truth, cfg, "ml")
    assert first == second
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(second.to_dict(), sort_keys=True)


def test_analytic_signal_noise_free():
    truth = frame_bits(120, seed=9)
    trace = bits_trace(truth)
    report = link.run_pilot_based(trace, truth, cfg, "ml")
    curve, mismatch = link.analytic_signal(report.epochs, truth, cfg, trace)
    assert curve.shape == (len(trace),)
    assert mismatch.shape == (120,)
    assert np.max(mismatch) < 1e-8
    table = link.parameter_table(report)
    assert list(table["valid_from"]) == [0, 40, 80]
    assert list(report.to_frame()["k"]) == list(range(1, 121))


def test_analytic_signal_needs_channel_estimates():
    truth = frame_bits(120, seed=10)
    trace = bits_trace(truth, NOISY, seed=10)
    report = link.run_pilot_based(trace, truth, cfg, "threshold")
    with pytest.raises(protonlink.DomainError):
        link.analytic_signal(report.epochs, truth, cfg, trace)
