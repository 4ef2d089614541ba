"""Monte-Carlo checks over many seeds on synthetic channels."""

import numpy as np
import pytest
from scipy import stats

from src.protonlink import estimation, link, signal
from src.protonlink.estimation import FitRequest
from src.protonlink.params import MULTI_SHOT, SINGLE_SHOT, ChannelParams, LinkConfig, ParameterRamp
from src.protonlink.signal import Grid, IlluminationSchedule

PILOTS = (1, 1, 0, 0, 1, 0, 1, 0, 0, 0)
SIGMA = 0.0038
cfg = LinkConfig()


def frame_bits(total: int, seed: int) -> tuple[int, ...]:
    bits = np.random.default_rng(seed).integers(0, 2, size=total)
    for frame in range(0, total, cfg.k_frame):
        bits[frame : frame + cfg.n_pilots] = PILOTS[: total - frame]
    return tuple(int(b) for b in bits)


def simulate_bits(bits, channel, seed: int):
    schedule = signal.build_schedule(bits, cfg)
    grid = Grid.covering(schedule, cfg.dt)
    return schedule, grid, signal.simulate(schedule, channel, grid, seed)


def test_ode_oracle_random_schedules():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        bits = rng.integers(0, 2, size=10)
        tau = rng.uniform(1.0, 10.0)
        cinf0 = rng.uniform(1.0, 3.0)
        cinf1 = cinf0 + rng.uniform(0.1, 4.0)
        params = ChannelParams.from_minutes(tau, tau, cinf0, cinf1)
        schedule = signal.build_schedule(bits, cfg)
        grid = Grid.covering(schedule, cfg.dt)
        rho = (cinf1 - cinf0) / tau
        oracle = signal.ode_oracle(schedule, rho, 1 / tau, 1 / tau, cinf0, cinf0, grid)
        closed = signal.mean_signal(schedule, params, grid)
        worst = max(worst, float(np.max(np.abs(closed.samples - oracle.samples))))
    assert worst < 1e-6


def test_pilot_fit_round_trip():
    channel = MULTI_SHOT.replace(noise_var=SIGMA**2)
    passed = 0
    for seed in range(50):
        schedule, grid, trace = simulate_bits(PILOTS, channel, seed)
        result = estimation.fit(FitRequest(trace, PILOTS, cfg=cfg))
        fitted = signal.mean_signal(schedule, result.params, grid).samples
        true = signal.mean_signal(schedule, channel, grid).samples
        rms = np.sqrt(np.mean((fitted - true) ** 2))
        if (
            abs(result.params.cinf0 / channel.cinf0 - 1) < 0.1
            and abs(result.objective / SIGMA**2 - 1) < 0.15
            and rms < SIGMA
        ):
            passed += 1
    assert passed >= 45


def test_step_response_fit_recovers_parameters():
    channel = SINGLE_SHOT.replace(noise_var=SIGMA**2)
    schedule = IlluminationSchedule.from_durations([(1, 1200), (0, 1200)])
    grid = Grid.covering(schedule, 1.0)
    passed = 0
    for seed in range(20):
        trace = signal.simulate(schedule, channel, grid, seed)
        params = estimation.fit(FitRequest(trace, schedule=schedule)).params
        close = all(
            abs(getattr(params, name) / getattr(channel, name) - 1) < 0.1
            for name in ("tau0", "tau1", "cinf0", "cinf1")
        )
        drift = abs(params.to_minutes()["drift_slope"] - channel.to_minutes()["drift_slope"])
        if close and drift < 0.002:
            passed += 1
    assert passed >= 18


@pytest.mark.parametrize("sigma", [0.0038, 0.0071])
def test_noise_recovery_over_seeds(sigma: float):
    channel = MULTI_SHOT.replace(noise_var=sigma**2)
    passed = 0
    for seed in range(50):
        _, _, trace = simulate_bits(PILOTS, channel, 100 + seed)
        result = estimation.fit(FitRequest(trace, PILOTS, cfg=cfg))
        if abs(np.sqrt(estimation.noise_variance(result)) / sigma - 1) < 0.15:
            passed += 1
    assert passed >= 45


def test_residuals_look_gaussian():
    channel = MULTI_SHOT.replace(noise_var=SIGMA**2)
    schedule = IlluminationSchedule.from_durations([(0, 400), (1, 800), (0, 800)])
    trace = signal.simulate(schedule, channel, Grid.covering(schedule, 1.0), seed=77)
    result = estimation.fit(FitRequest(trace, schedule=schedule))
    assert result.residuals.size == 2000
    assert abs(stats.skew(result.residuals)) < 0.2
    assert abs(stats.kurtosis(result.residuals)) < 0.5


def test_genie_has_no_errors_and_bounds_decision_feedback():
    channel = MULTI_SHOT.replace(noise_var=SIGMA**2)
    for seed in range(5):
        truth = frame_bits(120, seed)
        _, _, trace = simulate_bits(truth, channel, seed)
        genie = link.run_genie(trace, truth, cfg)
        decided = link.run_pilot_based(trace, truth, cfg, "ml")
        assert genie.ber[0] == 0
        assert genie.ber[0] <= decided.ber[0]


def test_genie_600_symbols_has_no_errors():
    channel = MULTI_SHOT.replace(noise_var=SIGMA**2)
    truth = frame_bits(600, 600)
    _, _, trace = simulate_bits(truth, channel, 600)
    assert link.run_genie(trace, truth, cfg).ber == (0, 450)


def test_ml_ber_grows_with_noise():
    errors = []
    for sigma in (0.0038, 0.05, 0.2):
        channel = MULTI_SHOT.replace(noise_var=sigma**2)
        total = 0
        for seed in range(8):
            truth = frame_bits(120, seed)
            _, _, trace = simulate_bits(truth, channel, seed)
            total += link.run_pilot_based(trace, truth, cfg, "ml").ber[0]
        errors.append(total)
    assert errors[0] <= errors[1] <= errors[2]
    assert errors[0] < errors[2]


def test_data_aided_beats_outdated_model_on_a_drifting_channel():
    ramp = ParameterRamp(
        SINGLE_SHOT.replace(noise_var=SIGMA**2), MULTI_SHOT.replace(noise_var=SIGMA**2), 7200.0
    )
    wins = losses = 0
    for seed in range(20):
        truth = frame_bits(120, seed)
        _, _, trace = simulate_bits(truth, ramp, seed)
        report = link.run_data_aided(trace, truth, cfg, "ml")
        fixed = link.run_fixed(trace, truth, cfg, "ml")
        if report.ber[0] < fixed.ber[0]:
            wins += 1
        elif report.ber[0] > fixed.ber[0]:
            losses += 1

        if seed < 3:
            noise = [epoch.estimate.noise_var for epoch in report.epochs]
            assert np.mean(noise[-3:]) <= 3 * np.mean(noise[:3])
            _, outdated = link.outdated_signal(report, truth, cfg, trace)
            _, tracked = link.analytic_signal(report.epochs, truth, cfg, trace)
            frames = outdated.reshape(3, 40).mean(axis=1)
            assert frames[0] < frames[1] < frames[2]
            assert outdated[80:].mean() > tracked[80:].mean()
    assert stats.binomtest(wins, wins + losses, alternative="greater").pvalue < 0.05
