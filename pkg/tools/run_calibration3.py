#!/usr/bin/env python3
"""Final calibration round: pin NMR(0-85) inside its acceptance band and
push NMR_min(20-85) as high as the model family allows."""
import json
import sys
import time

sys.path.insert(0, "src")

from fecim.analysis import DEFAULT_KNOBS, Target, _objective, calibrate, measure_metrics
from fecim.params import Design, save_param_file

base = json.load(open(sys.argv[1] if len(sys.argv) > 1 else "/tmp/calib2_out.json"))
out_path = sys.argv[2] if len(sys.argv) > 2 else "/tmp/calib3_out.json"

targets = [
    Target("baseline saturation fluctuation", "base_sat_fluct", "point", goal=0.206, scale=0.008, weight=4.0),
    Target("baseline subthreshold fluctuation", "base_sub_fluct", "point", goal=0.521, scale=0.012, weight=4.0),
    Target("2T cell fluctuation 0-85C", "cell_fluct", "max", goal=0.26, scale=0.02, weight=4.0),
    Target("2T cell fluctuation 20-85C", "cell_fluct_20_85", "max", goal=0.12, scale=0.02, weight=4.0),
    Target("NMR_min 0-85C", "nmr_min_0_85", "band", lo=0.19, hi=0.30, scale=0.03, weight=10.0),
    Target("NMR argmin 0-85C == 0", "nmr_argmin0_margin", "band", lo=0.03, hi=1e9, scale=0.05, weight=10.0),
    Target("NMR_min 20-85C", "nmr_min_20_85", "band", lo=1.8, hi=2.7, scale=0.15, weight=8.0),
    Target("NMR argmin 20-85C == 7", "nmr_argmin7_margin", "band", lo=0.0, hi=1e9, scale=0.2, weight=2.0),
    Target("no level overlap 0-85C", "nmr_all_positive", "flag", weight=40.0),
    Target("hot-window leak spread vs unit spread", "hot_leak_ratio", "band", lo=0.0, hi=0.6, scale=0.15, weight=6.0),
    Target("full-range leak spread vs unit spread", "full_leak_ratio", "band", lo=1.25, hi=50.0, scale=0.25, weight=6.0),
    Target("average MAC energy (fJ)", "energy_avg_fj", "band", lo=2.5, hi=3.8, scale=0.4, weight=3.0),
    Target("on/off ratio at 27C", "onoff_margin", "flag", weight=10.0),
    Target("pointwise compensation", "compensation_ok", "flag", weight=30.0),
    Target("MC per-cell sensitivity", "mc_sens", "band", lo=0.0, hi=0.05, scale=0.2, weight=0.25),
]

seeds = [dict(base)]
v1 = dict(base); v1["m1.kappa_t"] = -5e-5; v1["m2.kappa_t"] = -5e-5; seeds.append(v1)
v2 = dict(base); v2["m1.kappa_t"] = -3e-5; v2["m2.kappa_t"] = -1.4e-4; seeds.append(v2)
v3 = dict(base); v3["m1.i0"] = base["m1.i0"] * 2.0; v3["m1.vth"] = base["m1.vth"] + 0.03; seeds.append(v3)

best = None
for idx, seed in enumerate(seeds):
    t0 = time.time()
    try:
        params, report = calibrate(seed, targets, DEFAULT_KNOBS, max_sweeps=18, residual_gate=1e9, fast=True)
        obj, metrics = _objective(params, targets, fast=False)
    except Exception as exc:
        print(f"seed {idx}: failed {exc}", flush=True)
        continue
    print(f"seed {idx}: objective {obj:.4g} ({time.time()-t0:.0f}s)", flush=True)
    keys = ("nmr_min_0_85", "nmr_argmin_0_85", "nmr_min_20_85", "nmr_argmin_20_85",
            "hot_leak_ratio", "cell_fluct", "energy_avg_fj", "v_unit_27", "leak_fraction")
    print("   ", {k: round(metrics[k], 4) if isinstance(metrics[k], float) else metrics[k] for k in keys}, flush=True)
    if best is None or obj < best[0]:
        best = (obj, params)

print("final polish (full fidelity)", flush=True)
params, report = calibrate(best[1], targets, DEFAULT_KNOBS, max_sweeps=16, residual_gate=1e9, fast=False)
save_param_file(params, out_path)
with open(out_path + ".report.txt", "w") as fh:
    fh.write(report)
metrics = measure_metrics(Design.from_params(params))
print(json.dumps({k: (round(v, 6) if isinstance(v, float) else v) for k, v in metrics.items()}, indent=1, default=str), flush=True)
print("written:", out_path, flush=True)
