#!/usr/bin/env python3
"""Staged calibration driver.  Run from the repo root:

    python tools/run_calibration.py [stageA.json] [out.json]

Stage B explores the cell/row knobs from several hand seeds with the fast
(10 degC step) scorecard; stage C jointly polishes every knob at full
resolution.  Writes the winning parameter set and a residual report.
"""
import json
import sys
import time

sys.path.insert(0, "src")

from fecim.analysis import DEFAULT_KNOBS, calibrate, default_targets, measure_metrics
from fecim.params import Design, save_param_file

stage_a_path = sys.argv[1] if len(sys.argv) > 1 else "/tmp/stageA.json"
out_path = sys.argv[2] if len(sys.argv) > 2 else "/tmp/calib_out.json"

base = json.load(open(stage_a_path))

STAGE_B_KNOBS = {
    k: v
    for k, v in DEFAULT_KNOBS.items()
    if k.startswith(("m1.", "m2.", "row."))
}

seeds = []
for vth1, vth2, wl2, i01, i02, n2, co in [
    (0.38, 0.50, 30.0, 3e-6, 1e-6, 1.0, 2.5e-15),
    (0.45, 0.40, 80.0, 1e-5, 1e-6, 1.0, 2.5e-15),
    (0.34, 0.60, 15.0, 1e-6, 3e-6, 1.2, 4e-15),
    (0.50, 0.30, 150.0, 1e-5, 3e-6, 1.0, 1.5e-15),
]:
    s = dict(base)
    s.update(
        {
            "m1.vth": vth1,
            "m2.vth": vth2,
            "m2.wl_ratio": wl2,
            "m1.i0": i01,
            "m2.i0": i02,
            "m2.n_slope": n2,
            "row.c_o": co,
            "row.c_acc": 2 * co,
        }
    )
    seeds.append(s)

targets = default_targets()
best = None
for idx, seed in enumerate(seeds):
    t0 = time.time()
    try:
        params, report = calibrate(
            seed, targets, STAGE_B_KNOBS, max_sweeps=20, residual_gate=1e9, fast=True
        )
    except Exception as exc:  # keep going across seeds
        print(f"seed {idx}: failed {exc}", flush=True)
        continue
    from fecim.analysis import _objective

    obj, metrics = _objective(params, targets, fast=False)
    print(f"seed {idx}: stageB objective {obj:.4g}  ({time.time()-t0:.0f}s)", flush=True)
    print("   ", {k: round(metrics[k], 4) if isinstance(metrics[k], float) else metrics[k]
                  for k in ("cell_fluct", "nmr_min_0_85", "nmr_argmin_0_85",
                            "nmr_min_20_85", "nmr_argmin_20_85", "energy_avg_fj",
                            "mc_sens", "leak_fraction")}, flush=True)
    if best is None or obj < best[0]:
        best = (obj, params)

print("stage C: joint polish", flush=True)
params, report = calibrate(
    best[1], targets, DEFAULT_KNOBS, max_sweeps=14, residual_gate=1e9, fast=False
)
save_param_file(params, out_path)
with open(out_path + ".report.txt", "w") as fh:
    fh.write(report)

metrics = measure_metrics(Design.from_params(params))
print(json.dumps({k: (v if not isinstance(v, float) else round(v, 6)) for k, v in metrics.items()}, indent=1, default=str), flush=True)
print("written:", out_path, flush=True)
