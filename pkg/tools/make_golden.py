#!/usr/bin/env python3
"""Regenerate tests/fixtures/golden.json from the committed defaults.

Run after (re)calibration; the values it freezes are regression constants,
not independent truth.
"""
import json
import sys
from pathlib import Path

sys.path.insert(0, "src")

import numpy as np

from fecim.analysis import SweepSpec, energy_report, fluctuation_profile, monte_carlo, MonteCarloSpec
from fecim.array import default_row_config, envelope, nmr, temperature_grid
from fecim.cell import CellKind
from fecim.device import FeFetState, Polarization, Temperature, drain_current, effective_vth
from fecim.nn_eval import evaluate, int_forward, load_digits_fixture, load_network_fixture, quantize
from fecim.params import default_design

design = default_design()
cfg = default_row_config(design)
grid = temperature_grid(0.0, 85.0, 5.0)

sat = fluctuation_profile(design, CellKind.ONE_FEFET_ONE_R, design.v_read_saturation)
sub = fluctuation_profile(design, CellKind.ONE_FEFET_ONE_R, design.v_read_subthreshold)
cell = fluctuation_profile(design, CellKind.TWO_T_ONE_FEFET, design.v_wl_on)

env = envelope(design, cfg, grid)
rep = nmr(env)
rep_hot = nmr(envelope(design, cfg, temperature_grid(20.0, 85.0, 5.0)))
erep = energy_report(design, cfg)

p = design.fefet
ratio = {}
for t_c in (0.0, 85.0):
    temp = Temperature(t_c)
    vth = effective_vth(p, FeFetState(Polarization.LOW_VT), temp)
    ratio[t_c] = drain_current(p, vth, 0.15, 1.0, temp)

from fecim.array import cell_output

v_on = cell.reference_output
v_units = [cell_output(design, 1, 1, Temperature(t), cfg)[0] for t in grid]
leak_27 = cell_output(design, 0, 1, Temperature(27.0), cfg)[0]

mc8 = monte_carlo(design, MonteCarloSpec(runs=100, sigma=0.054, seed=1, cells_per_row=8))
mc4 = monte_carlo(design, MonteCarloSpec(runs=100, sigma=0.054, seed=1, cells_per_row=4))

net = load_network_fixture()
qnet = quantize(net, 4, 4)
images, labels = load_digits_fixture()
sw_acc = float((int_forward(qnet, images).argmax(1) == labels).mean())
var = evaluate(qnet, images[:200], labels[:200], design, cfg, Temperature(27.0),
               sigma=0.054, seed=11)

golden = {
    "version": 1,
    "drain_ratio_85c_over_0c": ratio[85.0] / ratio[0.0],
    "base_sat_fluct": sat.max_fluctuation,
    "base_sub_fluct": sub.max_fluctuation,
    "cell_fluct": cell.max_fluctuation,
    "cell_fluct_20_85": max(abs(n - 1.0) for (t, _, n) in cell.table if t >= 20.0 - 1e-9),
    "v_unit_27c": v_on,
    "v_unit_envelope": [min(v_units), max(v_units)],
    "leak_27c": leak_27,
    "leak_fraction_27c": leak_27 / v_on,
    "nmr_min_0_85": rep.nmr_min,
    "nmr_argmin_0_85": rep.argmin,
    "nmr_values_0_85": rep.nmr,
    "nmr_min_20_85": rep_hot.nmr_min,
    "nmr_argmin_20_85": rep_hot.argmin,
    "energy_avg_fj": erep.average * 1e15,
    "energy_per_level_fj": [e * 1e15 for e in erep.per_level],
    "tops_per_watt": erep.tops_per_watt,
    "mc_max_error_8cells": mc8.max_error,
    "mc_max_error_4cells": mc4.max_error,
    "nn_software_accuracy": sw_acc,
    "nn_sigma54_accuracy": var.accuracy,
    "decode_thresholds": list(cfg.decode_thresholds),
}
out = Path("tests/fixtures/golden.json")
out.parent.mkdir(parents=True, exist_ok=True)
with open(out, "w") as fh:
    json.dump(golden, fh, indent=2)
    fh.write("\n")
print(json.dumps(golden, indent=1))
