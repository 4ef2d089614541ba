from protonlink import MULTI_SHOT, LinkConfig, Scheme, build_schedule, load_trace, run, save_trace, simulate
from protonlink.estimation import FitRequest, fit
from protonlink.link import parameter_table
from protonlink.mempath import MemPath
from protonlink.signal import Grid
from protonlink.utils.sync import ArtifactSyncer

cfg = LinkConfig()
channel = MULTI_SHOT.replace(noise_var=0.0038**2)

pilots = cfg.pilots_for(cfg.n_pilots)
bits = pilots + (0, 1, 1, 0, 1, 0, 0, 1, 0, 1) * 3
schedule = build_schedule(bits, cfg)
trace = simulate(schedule, channel, Grid.covering(schedule, cfg.dt), seed=1)

#
# In-memory artifacts
#
root = MemPath("runs/example")
root.mkdir(parents=True)
save_trace(trace, root / "trace.csv", "ph")
again = load_trace(root / "trace.csv")
print(len(again), again.dt)

#
# Pilot fit
#
result = fit(FitRequest(trace, pilots, (0, len(pilots) * cfg.samples_per_symbol), cfg=cfg))
print(result.params.to_minutes(), result.objective, result.converged)

for scheme in (Scheme.PilotBased, Scheme.DataAided):
    for detector in ("ml", "threshold"):
        report = run(scheme, trace, bits, cfg, detector)
        errors, total = report.ber
        print(f"{scheme.value:<12} {detector:<10} {errors}/{total}")
        (root / f"{scheme.value}-{detector}.json").write_json(report.to_dict())

print(parameter_table(run(Scheme.DataAided, trace, bits, cfg, "ml")))

ArtifactSyncer().sync(root, "./_runs", dry_run=True)
