"""Command line entry point.

Every command writes its artifacts into an in-memory tree first and
flushes it below the output directory together with ``metadata.json``,
which records enough to rerun the command with ``protonlink replay``.
"""

import argparse as _argparse
import concurrent.futures as _futures
import json as _json
import logging as _logging
import pathlib as _pathlib
import sys as _sys
import typing as _ty

import numpy as _np
import pandas as _pd
from scipy import stats as _stats

from . import __version__
from .config import ExperimentConfig, apply_overrides, load_raw
from .errors import ConfigurationError, ProtonlinkError
from .estimation import FitRequest, fit, residual_histogram
from .link import LinkReport, Scheme, run
from .mempath import MemPath, MemPathBackend
from .signal import RNG_ALGORITHM, mean_signal, simulate
from .traceio import FLOAT_FORMAT, Kind, load_trace, save_trace
from .utils import as_bits
from .utils.sync import ArtifactSyncer

_logger = _logging.getLogger(__name__)

DETECTORS = ("ml", "threshold")
SCHEMES = tuple(s.value for s in Scheme)
CONFIDENCE = 0.95


def _write_csv(frame: _pd.DataFrame, path: MemPath):
    with path.open("w", encoding="utf-8", newline="") as fh:
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _metadata(command: str, config: ExperimentConfig | None, arguments: dict, root: MemPath) -> dict:
    data = {
        "command": command,
        "arguments": arguments,
        "protonlink": __version__,
        "rng": RNG_ALGORITHM,
        "outputs": {"/".join(f.relative_parts(root)): f.sha256() for f in root.walk_files()},
    }
    if config is not None:
        data.update(
            seed=config.seed,
            config_hash=config.config_hash(),
            config=config.to_dict(),
            source=config.document(),
        )
    return data


def _finish(command: str, config, arguments: dict, root: MemPath, output_dir: str):
    (root / "metadata.json").write_json(_metadata(command, config, arguments, root))
    ArtifactSyncer().sync(root, output_dir)
    _logger.info("%s wrote %s", command, output_dir)


def _config(args) -> ExperimentConfig:
    config = getattr(args, "config_object", None)
    if config is not None:
        return config
    data = apply_overrides(load_raw(args.config), args.set or [])
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    config = ExperimentConfig.from_dict(data)
    if getattr(args, "output_dir", None):
        config = config.replace(output_dir=args.output_dir)
    return config


def simulate_artifacts(config: ExperimentConfig, root: MemPath):
    bits = config.transmitted_bits()
    schedule = config.schedule(bits)
    grid = config.grid(schedule)
    channel = config.channel_model()
    trace = simulate(schedule, channel, grid, config.seeds()[1])
    save_trace(trace, root / "trace.csv")
    save_trace(mean_signal(schedule, channel, grid), root / "mean.csv")
    (root / "bits.txt").write_text("".join(map(str, bits)) + "\n")
    return trace, bits


def cmd_simulate(args) -> dict:
    config = _config(args)
    root = MemPath()
    trace, bits = simulate_artifacts(config, root)
    _finish("simulate", config, {}, root, config.output_dir)
    return {"samples": len(trace), "symbols": len(bits), "output_dir": config.output_dir}


def cmd_fit(args) -> dict:
    config = _config(args)
    trace = load_trace(args.trace, args.kind)
    count = args.count or config.link.n_pilots
    if args.bits:
        bits = as_bits(args.bits)
    else:
        bits = config.transmitted_bits()[args.first : args.first + count]
    n = config.link.samples_per_symbol
    start = config.start + args.first * n
    window = (start, start + len(bits) * n)
    result = fit(FitRequest(trace, bits, window, cfg=config.link))

    root = MemPath()
    report = {
        "params": result.params.to_minutes(),
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "window": list(window),
        "bits": "".join(map(str, bits)),
    }
    (root / "fit.json").write_json(report)
    times = trace.times[window[0] : window[1]]
    _write_csv(_pd.DataFrame({"t_seconds": times, "residual": result.residuals}), root / "residuals.csv")
    centers, density, normal = residual_histogram(result.residuals, bins=args.bins)
    _write_csv(
        _pd.DataFrame({"residual": centers, "density": density, "normal_pdf": normal}),
        root / "histogram.csv",
    )
    arguments = {
        "trace": str(args.trace),
        "kind": args.kind,
        "bits": args.bits,
        "first": args.first,
        "count": args.count,
        "bins": args.bins,
    }
    _finish("fit", config, arguments, root, config.output_dir)
    return report


def _combinations(schemes: _ty.Iterable[str], detectors: _ty.Iterable[str]):
    for scheme in schemes:
        for detector in detectors:
            if Scheme(scheme) is Scheme.Genie and detector != "ml":
                continue
            yield Scheme(scheme), detector


def detect_artifacts(
    trace, bits, config: ExperimentConfig, schemes, detectors, root: MemPath
) -> list[dict]:
    rows = []
    for folder in ("reports", "diagnostics"):
        (root / folder).mkdir(parents=True, exist_ok=True)
    for scheme, detector in _combinations(schemes, detectors):
        report: LinkReport = run(scheme, trace, bits, config.link, detector, start=config.start)
        name = f"{scheme.value}-{detector}"
        (root / "reports" / f"{name}.json").write_json(report.to_dict())
        frame = report.to_frame()
        n = config.link.samples_per_symbol
        starts = config.start + (frame["k"].to_numpy() - 1) * n
        frame.insert(0, "t_seconds", trace.t_start + starts * trace.dt)
        _write_csv(frame, root / "diagnostics" / f"{name}.csv")
        errors, total = report.ber
        rows.append(
            {
                "scheme": scheme.value,
                "detector": detector,
                "errors": errors,
                "total": total,
                "ber": errors / total if total else 0.0,
            }
        )
    _write_csv(_pd.DataFrame(rows), root / "summary.csv")
    return rows


def _expand(value: str, choices: tuple[str, ...]) -> tuple[str, ...]:
    return choices if value == "all" else (value,)


def _print_table(rows: list[dict]):
    print(f"{'scheme':<12} {'detector':<10} {'BER':>10}")
    for row in rows:
        print(f"{row['scheme']:<12} {row['detector']:<10} {row['errors']:>4}/{row['total']:<5}")


def cmd_detect(args) -> dict:
    config = _config(args)
    trace = load_trace(args.trace, args.kind)
    bits = as_bits(args.bits) if args.bits else config.transmitted_bits()
    root = MemPath()
    rows = detect_artifacts(
        trace, bits, config, _expand(args.scheme, SCHEMES), _expand(args.detector, DETECTORS), root
    )
    arguments = {
        "trace": str(args.trace),
        "kind": args.kind,
        "bits": args.bits,
        "scheme": args.scheme,
        "detector": args.detector,
    }
    _finish("detect", config, arguments, root, config.output_dir)
    if not args.quiet_table:
        _print_table(rows)
    return {"rows": rows}


def cmd_convert(args) -> dict:
    target = Kind(args.to)
    source = Kind.Concentration if target is Kind.Ph else Kind.Ph
    trace = load_trace(args.input, source)
    output = _pathlib.Path(args.output)
    if getattr(args, "output_dir", None):
        output = _pathlib.Path(args.output_dir) / output
    root = MemPath()
    save_trace(trace, root / output.name, target)
    arguments = {"input": str(args.input), "output": output.name, "to": target.value}
    _finish("convert", None, arguments, root, str(output.parent))
    return {"samples": len(trace), "to": target.value}


def _sweep_one(job: tuple[dict, int, tuple[str, ...], tuple[str, ...]]):
    """One seed of a sweep; runs in a worker process."""
    data, seed, schemes, detectors = job
    config = ExperimentConfig.from_dict({**data, "seed": seed})
    backend = MemPathBackend()
    root = MemPath(f"seed-{seed:06d}", backend=backend)
    root.mkdir(parents=True)
    trace, bits = simulate_artifacts(config, root)
    rows = detect_artifacts(trace, bits, config, schemes, detectors, root)
    for row in rows:
        row["seed"] = seed
    return seed, rows, backend


def confidence_interval(values: _ty.Sequence[float], confidence: float = CONFIDENCE):
    """Student t interval for the mean; degenerate samples give (mean, mean)."""
    values = _np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    sem = float(_stats.sem(values))
    if sem == 0.0:
        return mean, mean, mean
    low, high = _stats.t.interval(confidence, values.size - 1, loc=mean, scale=sem)
    return mean, float(low), float(high)


def sweep_summary(rows: _pd.DataFrame) -> _pd.DataFrame:
    summary = []
    for (scheme, detector), group in rows.groupby(["scheme", "detector"], sort=True):
        mean, low, high = confidence_interval(group["ber"])
        summary.append(
            {
                "scheme": scheme,
                "detector": detector,
                "seeds": len(group),
                "ber_mean": mean,
                "ci_low": low,
                "ci_high": high,
            }
        )
    return _pd.DataFrame(summary)


def cmd_sweep(args) -> dict:
    config = _config(args)
    seeds = [config.seed + i for i in range(args.seeds)]
    data = config.document()
    schemes = _expand(args.scheme, SCHEMES)
    detectors = _expand(args.detector, DETECTORS)
    jobs = [(data, seed, schemes, detectors) for seed in seeds]

    results = []
    if args.workers == 1:
        results = [_sweep_one(job) for job in jobs]
    else:
        with _futures.ProcessPoolExecutor(max_workers=args.workers) as executor:
            results = list(executor.map(_sweep_one, jobs))

    backend = MemPathBackend()
    root = MemPath(backend=backend)
    rows = []
    for seed, seed_rows, seed_backend in sorted(results, key=lambda r: r[0]):
        backend.update(seed_backend)
        rows.extend(seed_rows)
    frame = _pd.DataFrame(rows, columns=["seed", "scheme", "detector", "errors", "total", "ber"])
    _write_csv(frame, root / "sweep.csv")
    summary = sweep_summary(frame)
    _write_csv(summary, root / "sweep_summary.csv")
    arguments = {"seeds": args.seeds, "scheme": args.scheme, "detector": args.detector}
    _finish("sweep", config, arguments, root, config.output_dir)
    return {"summary": summary.to_dict(orient="records")}


REPLAYABLE: dict[str, _ty.Callable[[_argparse.Namespace], dict]] = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "detect": cmd_detect,
    "convert": cmd_convert,
    "sweep": cmd_sweep,
}


def cmd_replay(args) -> dict:
    """Rerun a recorded command with its resolved config into a new directory."""
    with open(args.metadata, "r", encoding="utf-8") as fh:
        metadata = _json.load(fh)
    command = metadata.get("command")
    if command not in REPLAYABLE:
        raise ConfigurationError(f"cannot replay command {command!r}", field="command")
    namespace = _argparse.Namespace(**metadata.get("arguments", {}))
    if "source" in metadata:
        config = ExperimentConfig.from_dict(metadata["source"])
        namespace.config_object = config.replace(output_dir=args.output_dir)
    namespace.output_dir = args.output_dir
    namespace.quiet_table = True
    namespace.workers = args.workers
    return REPLAYABLE[command](namespace)


def build_parser() -> _argparse.ArgumentParser:
    parser = _argparse.ArgumentParser(
        prog="protonlink", description="Optical-to-chemical molecular communication link simulator"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    def experiment(name: str, help: str):
        sub = commands.add_parser(name, help=help)
        sub.add_argument("config", help="experiment TOML file")
        sub.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config field, e.g. link.k_frame=120",
        )
        sub.add_argument("--seed", type=int, help="run seed")
        sub.add_argument("--output-dir", help="artifact directory")
        return sub

    sub = experiment("simulate", "simulate a trace")
    sub.set_defaults(handler=cmd_simulate)

    sub = experiment("fit", "fit channel parameters to known symbols")
    sub.add_argument("trace", help="trace CSV")
    sub.add_argument("--kind", choices=[k.value for k in Kind], help="trace kind, default from header")
    sub.add_argument("--bits", help="known bits, default from the config")
    sub.add_argument("--first", type=int, default=0, help="0-based index of the first known symbol")
    sub.add_argument("--count", type=int, help="number of known symbols, default n_pilots")
    sub.add_argument("--bins", type=int, default=50, help="residual histogram bins")
    sub.set_defaults(handler=cmd_fit)

    sub = experiment("detect", "run link schemes on a trace")
    sub.add_argument("trace", help="trace CSV")
    sub.add_argument("--kind", choices=[k.value for k in Kind], help="trace kind, default from header")
    sub.add_argument("--bits", help="transmitted bits, default from the config")
    sub.add_argument("--scheme", choices=SCHEMES + ("all",), default="all")
    sub.add_argument("--detector", choices=DETECTORS + ("all",), default="all")
    sub.add_argument("--quiet-table", action="store_true", help="do not print the BER table")
    sub.set_defaults(handler=cmd_detect)

    sub = commands.add_parser("convert", help="convert between pH and concentration traces")
    sub.add_argument("input")
    sub.add_argument("output")
    sub.add_argument("--to", choices=[k.value for k in Kind], required=True)
    sub.add_argument("--output-dir", help="artifact directory, default the output file's directory")
    sub.set_defaults(handler=cmd_convert)

    sub = experiment("sweep", "simulate and detect over consecutive seeds")
    sub.add_argument("--seeds", type=int, default=50, help="number of seeds, starting at the run seed")
    sub.add_argument("--scheme", choices=SCHEMES + ("all",), default="all")
    sub.add_argument("--detector", choices=DETECTORS + ("all",), default="all")
    sub.add_argument("--workers", type=int, default=None, help="worker processes, 1 runs inline")
    sub.set_defaults(handler=cmd_sweep)

    sub = commands.add_parser("replay", help="rerun a command from its metadata.json")
    sub.add_argument("metadata")
    sub.add_argument("--output-dir", required=True)
    sub.add_argument("--workers", type=int, default=None)
    sub.set_defaults(handler=cmd_replay)
    return parser


def _configure_logging(args):
    level = _logging.WARNING
    if args.verbose:
        level = _logging.DEBUG
    elif args.quiet:
        level = _logging.ERROR
    _logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(error_class: str, message: str, code: int) -> int:
    print(_json.dumps({"error": error_class, "message": message}), file=_sys.stderr)
    return code


def main(argv: _ty.Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        args.handler(args)
    except ProtonlinkError as error:
        return _fail(error.error_class, str(error), error.exit_code)
    except Exception as error:
        _logger.debug("unexpected failure", exc_info=True)
        return _fail(type(error).__name__, str(error), 1)
    return 0


if __name__ == "__main__":
    _sys.exit(main())
