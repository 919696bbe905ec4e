"""Command-line front end: experiment selection, parameter overrides, and
CSV/manifest emission.

Every run writes a manifest.json (subcommand, arguments, seed, parameter
file hash) next to its CSV outputs so results can be reproduced exactly.
Exit codes: 0 success, 2 usage error, 3 solver failure, 4 calibration gate
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    MonteCarloSpec,
    SweepSpec,
    Target,
    calibrate,
    CalibrationFailedError,
    default_targets,
    energy_report,
    fluctuation_profile,
    measure_metrics,
    monte_carlo,
)
from .array import (
    RowConfig,
    baseline_envelope,
    default_row_config,
    envelope,
    mac_row,
    nmr,
    temperature_grid,
)
from .cell import CellKind, NoBracketError, NoConvergenceError, StepUnderflowError
from .device import FeFetState, Polarization, Temperature, drain_current, effective_vth
from .params import (
    Design,
    UnknownParameterError,
    apply_overrides,
    default_params,
    load_param_file,
    save_param_file,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_CALIBRATION = 4


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _params_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _parse_set(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key.strip()] = value
    return overrides


def _sweep_from_args(args, design) -> SweepSpec:
    t_min, t_max, t_step, t_ref = design.sweep
    if args.temp_min is not None:
        t_min = args.temp_min
    if args.temp_max is not None:
        t_max = args.temp_max
    if args.temp_step is not None:
        t_step = args.temp_step
    return SweepSpec(t_min, t_max, t_step, t_ref)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fecim",
        description="Subthreshold-FeFET compute-in-memory array simulator",
    )
    parser.add_argument("--params", type=Path, default=None, help="parameter file (JSON)")
    parser.add_argument("--out", type=Path, default=Path("fecim-out"), help="output directory")
    parser.add_argument("--seed", type=int, default=1, help="RNG seed")
    parser.add_argument("--temp-min", type=float, default=None)
    parser.add_argument("--temp-max", type=float, default=None)
    parser.add_argument("--temp-step", type=float, default=None)
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override one parameter key (repeatable)",
    )
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for parallel drivers")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("device-iv", help="FeFET I-V table over gate bias and temperature")
    sub.add_parser("cell-sweep", help="normalized cell outputs vs temperature")
    sub.add_parser("row-envelope", help="MAC-level output ranges over the grid")
    sub.add_parser("nmr", help="noise-margin-rate table for the calibrated row")
    sub.add_parser("montecarlo", help="process-variation Monte Carlo")
    sub.add_parser("energy", help="per-level energy and efficiency report")
    p_inf = sub.add_parser("infer", help="hardware-in-the-loop digit inference")
    p_inf.add_argument("--images", type=int, default=200, help="number of test images")
    p_inf.add_argument("--sigma", type=float, default=0.0, help="FeFET vth variation (V)")
    p_inf.add_argument("--temp", type=float, default=27.0, help="temperature (degC)")
    p_cal = sub.add_parser("calibrate", help="re-fit free constants to the target set")
    p_cal.add_argument("--max-sweeps", type=int, default=8)
    p_cal.add_argument("--gate", type=float, default=1e3)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        params = load_param_file(args.params) if args.params else default_params()
        params = apply_overrides(params, _parse_set(args.set))
        design = Design.from_params(params)
    except (UnknownParameterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir: Path = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "fecim",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "overrides": _parse_set(args.set),
        "params_sha256": _params_hash(params),
        "outputs": [],
    }

    try:
        outputs = _dispatch(args, design, params, out_dir)
    except (NoConvergenceError, NoBracketError, StepUnderflowError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CalibrationFailedError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    manifest["outputs"] = outputs
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _dispatch(args, design: Design, params: dict, out_dir: Path):
    cmd = args.command
    sweep = _sweep_from_args(args, design)

    if cmd == "device-iv":
        rows = []
        for t_c in sweep.grid():
            temp = Temperature(t_c)
            for pol, label in ((Polarization.LOW_VT, "low_vt"), (Polarization.HIGH_VT, "high_vt")):
                state = FeFetState(pol)
                vth = effective_vth(design.fefet, state, temp)
                for k in range(0, 25):
                    v_gs = 0.05 * k
                    i_d = drain_current(design.fefet, vth, v_gs, 1.0, temp)
                    rows.append((label, t_c, v_gs, 1.0, i_d))
        write_csv(out_dir / "device_iv.csv", ["state", "t_celsius", "v_gs", "v_ds", "i_d"], rows)
        return ["device_iv.csv"]

    if cmd == "cell-sweep":
        files = []
        for kind, v_read, name in (
            (CellKind.ONE_FEFET_ONE_R, design.v_read_saturation, "baseline_saturation"),
            (CellKind.ONE_FEFET_ONE_R, design.v_read_subthreshold, "baseline_subthreshold"),
            (CellKind.TWO_T_ONE_FEFET, design.v_wl_on, "cell_2t1f"),
        ):
            prof = fluctuation_profile(design, kind, v_read, sweep)
            rows = [(t, raw, norm) for (t, raw, norm) in prof.table]
            rows.append(("max_fluctuation", prof.max_fluctuation, ""))
            fn = f"fluctuation_{name}.csv"
            write_csv(out_dir / fn, ["t_celsius", "output", "normalized"], rows)
            files.append(fn)
        return files

    if cmd == "row-envelope":
        grid = sweep.grid()
        cfg = default_row_config(design, grid)
        env = envelope(design, cfg, grid)
        rows = []
        for j, t_c in enumerate(env.grid):
            for level, v in enumerate(env.per_temp[j]):
                rows.append((level, t_c, v))
        write_csv(out_dir / "envelope.csv", ["level", "t_celsius", "v_acc"], rows)
        bounds = [(i, env.lv[i], env.hv[i]) for i in range(env.levels())]
        write_csv(out_dir / "envelope_bounds.csv", ["level", "lv", "hv"], bounds)
        return ["envelope.csv", "envelope_bounds.csv"]

    if cmd == "nmr":
        grid = sweep.grid()
        cfg = default_row_config(design, grid)
        rep = nmr(envelope(design, cfg, grid))
        rows = [(i, rep.nmr[i]) for i in range(len(rep.nmr))]
        rows.append(("nmr_min", rep.nmr_min))
        rows.append(("argmin", rep.argmin))
        write_csv(out_dir / "nmr.csv", ["i", "nmr_i"], rows)
        base = nmr(baseline_envelope(design, design.v_read_subthreshold, grid, design.n_cells))
        rows_b = [(i, base.nmr[i]) for i in range(len(base.nmr))]
        rows_b.append(("nmr_min", base.nmr_min))
        rows_b.append(("argmin", base.argmin))
        write_csv(out_dir / "nmr_baseline.csv", ["i", "nmr_i"], rows_b)
        return ["nmr.csv", "nmr_baseline.csv"]

    if cmd == "montecarlo":
        spec = MonteCarloSpec(
            runs=design.mc_runs, sigma=design.mc_sigma, seed=args.seed,
            cells_per_row=design.n_cells,
        )
        cfg = default_row_config(design)
        rep = monte_carlo(design, spec, cfg)
        write_csv(
            out_dir / "montecarlo.csv",
            ["run", "relative_error"],
            [(i, e) for i, e in enumerate(rep.errors)],
        )
        hist_rows = [
            (rep.bin_edges[i], rep.bin_edges[i + 1], rep.bin_counts[i])
            for i in range(len(rep.bin_counts))
        ]
        hist_rows.append(("max_error", rep.max_error, ""))
        hist_rows.append(("unit_volts", rep.unit, ""))
        write_csv(out_dir / "montecarlo_hist.csv", ["bin_lo", "bin_hi", "count"], hist_rows)
        return ["montecarlo.csv", "montecarlo_hist.csv"]

    if cmd == "energy":
        cfg = default_row_config(design)
        rep = energy_report(design, cfg)
        rows = [(lvl, e) for lvl, e in enumerate(rep.per_level)]
        rows.append(("average", rep.average))
        rows.append(("ops_per_mac", rep.ops_per_mac))
        rows.append(("tops_per_watt", rep.tops_per_watt))
        rows.append(("latency_s", rep.latency))
        write_csv(out_dir / "energy.csv", ["level", "energy_j"], rows)
        return ["energy.csv"]

    if cmd == "infer":
        from .nn_eval import evaluate, int_forward, load_digits_fixture, load_network_fixture, quantize

        net = load_network_fixture()
        qnet = quantize(net, w_bits=4, a_bits=4)
        images, labels = load_digits_fixture()
        n = min(args.images, len(labels))
        images, labels = images[:n], labels[:n]
        cfg = default_row_config(design)
        sw_logits = int_forward(qnet, images)
        sw_acc = float((sw_logits.argmax(1) == labels).mean())
        rep = evaluate(
            qnet, images, labels, design, cfg, Temperature(args.temp),
            sigma=args.sigma, seed=args.seed,
        )
        rows = [
            ("software_int_accuracy", sw_acc),
            ("hardware_accuracy", rep.accuracy),
            ("images", rep.n_images),
            ("temp_celsius", args.temp),
            ("sigma_vth", args.sigma),
            ("total_energy_j", rep.total_energy),
            ("mac_rows", rep.n_mac_rows),
        ]
        rows += [(f"decode_errors.{k}", v) for k, v in rep.decode_errors.items()]
        write_csv(out_dir / "inference.csv", ["metric", "value"], rows)
        return ["inference.csv"]

    if cmd == "calibrate":
        new_params, report = calibrate(
            params, max_sweeps=args.max_sweeps, residual_gate=args.gate
        )
        save_param_file(new_params, out_dir / "calibrated_params.json")
        (out_dir / "calibration_report.txt").write_text(report + "\n")
        return ["calibrated_params.json", "calibration_report.txt"]

    raise ValueError(f"unknown command {cmd}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
