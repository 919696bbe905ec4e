#!/usr/bin/env python3
"""Second-round calibration: refine the stage-C result toward the NMR
argmin structure (leak knee near 20 degC, controlled unit slope)."""
import json
import sys
import time

sys.path.insert(0, "src")

from fecim.analysis import DEFAULT_KNOBS, _objective, calibrate, default_targets, measure_metrics
from fecim.params import Design, save_param_file

src = sys.argv[1] if len(sys.argv) > 1 else "/tmp/calib_out.json"
out_path = sys.argv[2] if len(sys.argv) > 2 else "/tmp/calib2_out.json"
base = json.load(open(src))

targets = default_targets()

CELL_KNOBS = {
    k: v
    for k, v in DEFAULT_KNOBS.items()
    if k.startswith(("m1.", "m2.", "row.")) or k in ("fefet.lambda",)
}
CELL_KNOBS["m1.kappa_t"] = (-1e-3, -2e-5, False)
CELL_KNOBS["m2.kappa_t"] = (-1e-3, -2e-5, False)

# Hand seeds biased toward a colder leak knee: stronger leak drive with a
# lower plateau (higher vth1 raises the knee current ratio).
seeds = [dict(base)]
for dk1, di1, dco in [(-0.02, 1.6, 1.0), (0.02, 0.7, 1.0), (0.0, 1.0, 1.4), (-0.04, 2.5, 0.8)]:
    s = dict(base)
    s["m1.vth"] = min(0.6, max(0.05, s["m1.vth"] + dk1))
    s["m1.i0"] = min(3e-5, max(1e-8, s["m1.i0"] * di1))
    s["row.c_o"] = min(1e-14, max(5e-16, s["row.c_o"] * dco))
    seeds.append(s)

best = None
for idx, seed in enumerate(seeds):
    t0 = time.time()
    try:
        params, report = calibrate(
            seed, targets, CELL_KNOBS, max_sweeps=24, residual_gate=1e9, fast=True
        )
        obj, metrics = _objective(params, targets, fast=False)
    except Exception as exc:
        print(f"seed {idx}: failed {exc}", flush=True)
        continue
    print(f"seed {idx}: objective {obj:.4g} ({time.time()-t0:.0f}s)", flush=True)
    keys = ("cell_fluct", "cell_fluct_20_85", "nmr_min_0_85", "nmr_argmin_0_85",
            "nmr_min_20_85", "nmr_argmin_20_85", "nmr7_20_85", "hot_leak_ratio",
            "full_leak_ratio", "energy_avg_fj", "mc_sens", "leak_fraction", "v_unit_27")
    print("   ", {k: round(metrics[k], 4) if isinstance(metrics[k], float) else metrics[k] for k in keys}, flush=True)
    if best is None or obj < best[0]:
        best = (obj, params)

print("joint polish", flush=True)
params, report = calibrate(
    best[1], targets, DEFAULT_KNOBS, max_sweeps=16, residual_gate=1e9, fast=False
)
save_param_file(params, out_path)
with open(out_path + ".report.txt", "w") as fh:
    fh.write(report)
metrics = measure_metrics(Design.from_params(params))
print(json.dumps({k: (round(v, 6) if isinstance(v, float) else v) for k, v in metrics.items()}, indent=1, default=str), flush=True)
print("written:", out_path, flush=True)
