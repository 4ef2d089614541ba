import hashlib
import json

import pandas as pd
import pytest

from src.protonlink import cli
from src.protonlink.traceio import load_trace

REFERENCE_BITS = "11001010001011100101"

EXPERIMENT = """
seed = 7

[channel]
tau0 = 6.41
tau1 = 8.40
cinf0 = 2.83
cinf1 = 5.77
drift_slope = -0.0039
noise_std = {noise}

[bits]
{bits}
"""


@pytest.fixture
def experiment(tmp_path):
    def write(noise: float = 0.0038, bits: str = f'sequence = "{REFERENCE_BITS}"', name="experiment.toml"):
        path = tmp_path / name
        path.write_text(EXPERIMENT.format(noise=noise, bits=bits))
        return path

    return write


def last_error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_writes_artifacts(experiment, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["simulate", str(experiment()), "--output-dir", str(out)]) == 0
    trace = load_trace(out / "trace.csv")
    assert len(trace) == 1200
    assert (out / "bits.txt").read_text() == REFERENCE_BITS + "\n"

    metadata = json.loads((out / "metadata.json").read_text())
    assert metadata["command"] == "simulate"
    assert metadata["seed"] == 7
    assert metadata["rng"] == "numpy.random.PCG64"
    assert len(metadata["config_hash"]) == 64
    assert metadata["source"]["channel"]["noise_std"] == 0.0038
    for name in ("trace.csv", "mean.csv", "bits.txt"):
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        assert metadata["outputs"][name] == digest


def test_simulate_is_reproducible(experiment, tmp_path):
    config = str(experiment())
    assert cli.main(["simulate", config, "--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["simulate", config, "--output-dir", str(tmp_path / "b")]) == 0
    assert cli.main(["simulate", config, "--seed", "8", "--output-dir", str(tmp_path / "c")]) == 0
    first = (tmp_path / "a" / "trace.csv").read_bytes()
    assert first == (tmp_path / "b" / "trace.csv").read_bytes()
    assert first != (tmp_path / "c" / "trace.csv").read_bytes()


def test_simulate_without_noise_writes_the_mean(experiment, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["simulate", str(experiment(noise=0.0)), "--output-dir", str(out)]) == 0
    assert (out / "trace.csv").read_bytes() == (out / "mean.csv").read_bytes()


def test_set_overrides_config(experiment, tmp_path):
    out = tmp_path / "run"
    args = ["simulate", str(experiment()), "--set", "link.t_symb=120", "--output-dir", str(out)]
    assert cli.main(args) == 0
    assert len(load_trace(out / "trace.csv")) == 2400


def test_replay_reproduces_trace(experiment, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["simulate", str(experiment()), "--output-dir", str(first)]) == 0
    assert cli.main(["replay", str(first / "metadata.json"), "--output-dir", str(second)]) == 0
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
    replayed = json.loads((second / "metadata.json").read_text())
    original = json.loads((first / "metadata.json").read_text())
    assert replayed["config_hash"] == original["config_hash"]


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[channel]\ntau0 = 1\ntau1 = 1\ncinf0 = 1\ncinf1 = 2\ncolour = 3\n")
    assert cli.main(["simulate", str(path), "--output-dir", str(tmp_path / "out")]) == 2
    error = last_error(capsys)
    assert error["error"] == "ConfigurationError"
    assert "channel.colour" in error["message"]
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["simulate", str(tmp_path / "missing.toml")]) == 1
    assert last_error(capsys)["error"] == "FileNotFoundError"


def test_bad_trace(experiment, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    trace.write_text("t_seconds,ph\n0,5.5\n")
    args = ["detect", str(experiment()), str(trace), "--output-dir", str(tmp_path / "out")]
    assert cli.main(args) == 5
    assert last_error(capsys)["error"] == "EmptyTraceError"


def test_detect_threshold_schemes(experiment, tmp_path):
    config = str(experiment(bits="length = 120"))
    run, out = tmp_path / "run", tmp_path / "detect"
    assert cli.main(["simulate", config, "--output-dir", str(run)]) == 0
    args = [
        "detect",
        config,
        str(run / "trace.csv"),
        "--detector",
        "threshold",
        "--quiet-table",
        "--output-dir",
        str(out),
    ]
    assert cli.main(args) == 0
    summary = pd.read_csv(out / "summary.csv")
    totals = dict(zip(summary["scheme"], summary["total"]))
    assert totals == {"pilot-based": 90, "data-aided": 110, "fixed": 110}
    assert set(summary["detector"]) == {"threshold"}

    diagnostics = pd.read_csv(out / "diagnostics" / "pilot-based-threshold.csv")
    assert len(diagnostics) == 120
    assert list(diagnostics["t_seconds"][:2]) == [0.0, 60.0]
    payload = diagnostics[~diagnostics["pilot"]]
    assert len(payload) == 90
    assert payload["threshold"].notna().all()
    report = json.loads((out / "reports" / "pilot-based-threshold.json").read_text())
    assert [e["valid_from"] for e in report["epochs"]] == [0, 40, 80]


def test_fit_noise_free(experiment, tmp_path):
    config = str(experiment(noise=0.0))
    run, out = tmp_path / "run", tmp_path / "fit"
    assert cli.main(["simulate", config, "--output-dir", str(run)]) == 0
    args = ["fit", config, str(run / "trace.csv"), "--count", "20", "--output-dir", str(out)]
    assert cli.main(args) == 0
    report = json.loads((out / "fit.json").read_text())
    assert report["objective"] < 1e-8
    assert report["window"] == [0, 1200]
    assert report["bits"] == REFERENCE_BITS
    assert report["params"]["tau0"] == pytest.approx(6.41, rel=1e-3)
    residuals = pd.read_csv(out / "residuals.csv")
    assert len(residuals) == 1200
    histogram = pd.read_csv(out / "histogram.csv")
    assert list(histogram.columns) == ["residual", "density", "normal_pdf"]


def test_convert_round_trip(experiment, tmp_path):
    run = tmp_path / "run"
    assert cli.main(["simulate", str(experiment()), "--output-dir", str(run)]) == 0
    ph, back = tmp_path / "ph.csv", tmp_path / "back.csv"
    assert cli.main(["convert", str(run / "trace.csv"), str(ph), "--to", "ph"]) == 0
    assert ph.read_text().startswith("t_seconds,ph\n")
    assert cli.main(["convert", str(ph), str(back), "--to", "concentration"]) == 0
    original, converted = load_trace(run / "trace.csv"), load_trace(back)
    assert converted.dt == original.dt
    assert abs(converted.samples - original.samples).max() < 1e-12


def test_sweep_inline(experiment, tmp_path):
    config = str(experiment(bits="length = 40"))
    out = tmp_path / "sweep"
    args = [
        "sweep",
        config,
        "--seeds",
        "3",
        "--detector",
        "threshold",
        "--scheme",
        "pilot-based",
        "--workers",
        "1",
        "--output-dir",
        str(out),
    ]
    assert cli.main(args) == 0
    rows = pd.read_csv(out / "sweep.csv")
    assert list(rows["seed"]) == [7, 8, 9]
    assert set(rows["total"]) == {30}
    summary = pd.read_csv(out / "sweep_summary.csv")
    assert summary.loc[0, "seeds"] == 3
    assert summary.loc[0, "ci_low"] <= summary.loc[0, "ber_mean"] <= summary.loc[0, "ci_high"]
    assert (out / "seed-000008" / "trace.csv").is_file()


def test_confidence_interval():
    mean, low, high = cli.confidence_interval([0.1, 0.2, 0.3])
    assert mean == pytest.approx(0.2)
    assert low < mean < high
    assert high - mean == pytest.approx(mean - low)
    assert cli.confidence_interval([0.5]) == (0.5, 0.5, 0.5)
    assert cli.confidence_interval([0.0, 0.0]) == (0.0, 0.0, 0.0)


def test_convert_writes_metadata_under_output_dir(experiment, tmp_path):
    run, out = tmp_path / "run", tmp_path / "converted"
    assert cli.main(["simulate", str(experiment()), "--output-dir", str(run)]) == 0
    args = ["convert", str(run / "trace.csv"), "ph.csv", "--to", "ph", "--output-dir", str(out)]
    assert cli.main(args) == 0
    metadata = json.loads((out / "metadata.json").read_text())
    assert metadata["command"] == "convert"
    assert metadata["arguments"]["output"] == "ph.csv"
    assert metadata["outputs"]["ph.csv"] == hashlib.sha256((out / "ph.csv").read_bytes()).hexdigest()

    again = tmp_path / "again"
    assert cli.main(["replay", str(out / "metadata.json"), "--output-dir", str(again)]) == 0
    assert (again / "ph.csv").read_bytes() == (out / "ph.csv").read_bytes()


def test_replay_reproduces_detect_reports(experiment, tmp_path):
    config = str(experiment(bits="length = 60"))
    run, first, second = tmp_path / "run", tmp_path / "first", tmp_path / "second"
    assert cli.main(["simulate", config, "--output-dir", str(run)]) == 0
    args = ["detect", config, str(run / "trace.csv"), "--quiet-table", "--output-dir", str(first)]
    assert cli.main(args) == 0
    assert cli.main(["replay", str(first / "metadata.json"), "--output-dir", str(second)]) == 0

    reports = sorted(p.name for p in (first / "reports").iterdir())
    assert "data-aided-ml.json" in reports
    assert sorted(p.name for p in (second / "reports").iterdir()) == reports
    for name in reports:
        assert (first / "reports" / name).read_bytes() == (second / "reports" / name).read_bytes()
    assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()


def test_replay_reproduces_fit(experiment, tmp_path):
    config = str(experiment())
    run, first, second = tmp_path / "run", tmp_path / "first", tmp_path / "second"
    assert cli.main(["simulate", config, "--output-dir", str(run)]) == 0
    assert cli.main(["fit", config, str(run / "trace.csv"), "--output-dir", str(first)]) == 0
    assert cli.main(["replay", str(first / "metadata.json"), "--output-dir", str(second)]) == 0
    for name in ("fit.json", "residuals.csv", "histogram.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
