"""The 8-cells-per-row MAC engine and its noise-margin analysis.

A row holds ``n_cells`` 2T-1FeFET cells, each charging its own output
capacitor C_o during a read; an EN switch then merges all C_o onto the
(pre-discharged) accumulation capacitor C_acc, giving

    V_acc = C_o * sum(V_Oi) / (n * C_o + C_acc)

The MAC value is decoded from V_acc with calibrated threshold voltages.
Noise-Margin-Rate analysis quantifies how far apart adjacent MAC levels
stay across a temperature window:

    NMR_i = (LV_{i+1} - HV_i) / (HV_i - LV_i)

with LV_i/HV_i the lowest/highest row output seen for MAC level i over the
window.  NMR_min = min_i NMR_i; negative values mean adjacent levels
overlap and decode errors are unavoidable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

from .cell import Bias, CellInstance, CellKind, read_transient, solve_baseline
from .device import FeFetState, Polarization, Temperature
from .params import Design

DEGENERATE_WIDTH = 1e-6  # V; narrower level ranges get the +inf NMR sentinel


class OverlapWarning(UserWarning):
    """Adjacent MAC levels overlap; decode is not guaranteed."""


@dataclass(frozen=True)
class RowConfig:
    """Row geometry and read timing; thresholds are a calibration product."""

    c_o: float
    c_acc: float
    t_read: float
    n_cells: int = 8
    decode_thresholds: tuple = ()

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if self.c_o <= 0 or self.c_acc <= 0:
            raise ValueError("capacitances must be positive")
        if list(self.decode_thresholds) != sorted(self.decode_thresholds):
            raise ValueError("decode thresholds must be increasing")


@dataclass
class MacResult:
    v_acc: float
    decoded: int
    energy: float
    per_cell_vo: list


@dataclass
class OutputEnvelope:
    """Per-MAC-level [LV_i, HV_i] ranges over a temperature grid."""

    lv: list
    hv: list
    grid: list
    per_temp: list  # per_temp[j][i] = row output at grid[j], level i

    def levels(self) -> int:
        return len(self.lv)


@dataclass
class NmrReport:
    nmr: list
    nmr_min: float
    argmin: int
    degenerate: list  # level indices whose width fell below DEGENERATE_WIDTH


def charge_share(per_cell_vo, cfg: RowConfig) -> float:
    """Eq.-exact charge redistribution of n charged C_o onto an empty C_acc."""
    if len(per_cell_vo) != cfg.n_cells:
        raise ValueError(f"expected {cfg.n_cells} cell voltages, got {len(per_cell_vo)}")
    total = math.fsum(per_cell_vo)
    return cfg.c_o * total / (cfg.n_cells * cfg.c_o + cfg.c_acc)


def accumulation_energy(per_cell_vo, cfg: RowConfig) -> float:
    """Energy dissipated in the EN switches while merging onto C_acc."""
    v_acc = charge_share(per_cell_vo, cfg)
    e_before = 0.5 * cfg.c_o * math.fsum(v * v for v in per_cell_vo)
    e_after = 0.5 * (cfg.n_cells * cfg.c_o + cfg.c_acc) * v_acc * v_acc
    return e_before - e_after


def decode(v_acc: float, thresholds) -> int:
    """MAC level whose voltage band contains v_acc (thresholds ascending)."""
    lo, hi = 0, len(thresholds)
    while lo < hi:
        mid = (lo + hi) // 2
        if v_acc >= thresholds[mid]:
            lo = mid + 1
        else:
            hi = mid
    return lo


@lru_cache(maxsize=200_000)
def _cell_read(
    design: Design,
    input_bit: int,
    stored_bit: int,
    vth_offset: float,
    t_celsius: float,
    c_o: float,
    t_read: float,
) -> tuple[float, float]:
    """Memoized single-cell read: returns (v_o_final, energy)."""
    state = FeFetState(
        Polarization.LOW_VT if stored_bit else Polarization.HIGH_VT,
        vth_offset=vth_offset,
    )
    cell = CellInstance(
        CellKind.TWO_T_ONE_FEFET,
        design.fefet,
        state,
        m1=design.m1,
        m2=design.m2,
        c_o=c_o,
    )
    v_wl = design.v_wl_on if input_bit else 0.0
    bias = Bias(v_wl=v_wl, v_bl=design.v_bl, v_sl=design.v_sl)
    tr = read_transient(cell, bias, Temperature(t_celsius), t_read)
    e_wl = 0.5 * design.c_wordline * v_wl * v_wl
    return tr.v_o_final, tr.energy + e_wl


def cell_output(
    design: Design,
    input_bit: int,
    stored_bit: int,
    temp: Temperature,
    cfg: RowConfig,
    vth_offset: float = 0.0,
) -> tuple[float, float]:
    """(v_o, energy) of one cell under the row's geometry and timing."""
    return _cell_read(
        design,
        int(bool(input_bit)),
        int(bool(stored_bit)),
        vth_offset,
        temp.celsius,
        cfg.c_o,
        cfg.t_read,
    )


def mac_row(
    design: Design,
    inputs,
    weights,
    temp: Temperature,
    cfg: RowConfig,
    offsets=None,
) -> MacResult:
    """One MAC operation: per-cell multiplies, charge share, decode.

    ``offsets`` is an optional per-cell FeFET threshold-offset list (process
    variation); zero offsets make all same-configuration cells identical.
    """
    n = cfg.n_cells
    if len(inputs) != n or len(weights) != n:
        raise ValueError(f"inputs and weights must have length {n}")
    if offsets is None:
        offsets = [0.0] * n
    if len(offsets) != n:
        raise ValueError(f"offsets must have length {n}")
    per_cell_vo = []
    energy = 0.0
    for bit_in, bit_w, off in zip(inputs, weights, offsets):
        v_o, e_cell = cell_output(design, bit_in, bit_w, temp, cfg, off)
        per_cell_vo.append(v_o)
        energy += e_cell
    v_acc = charge_share(per_cell_vo, cfg)
    energy += accumulation_energy(per_cell_vo, cfg)
    level = decode(v_acc, cfg.decode_thresholds) if cfg.decode_thresholds else -1
    return MacResult(v_acc=v_acc, decoded=level, energy=energy, per_cell_vo=per_cell_vo)


def _canonical_row_output(design, cfg, level, temp) -> float:
    """Row output for the canonical pattern: first ``level`` inputs high,
    all weights stored '1'.  With identical cells the choice of which cells
    are active is immaterial."""
    v_on, _ = cell_output(design, 1, 1, temp, cfg)
    v_leak, _ = cell_output(design, 0, 1, temp, cfg)
    vo = [v_on] * level + [v_leak] * (cfg.n_cells - level)
    return charge_share(vo, cfg)


def envelope(design: Design, cfg: RowConfig, grid) -> OutputEnvelope:
    """Row-output envelope per MAC level over a temperature grid (no variation)."""
    if not grid:
        raise ValueError("temperature grid must be non-empty")
    n = cfg.n_cells
    per_temp = []
    for t_c in grid:
        temp = Temperature(t_c)
        row = [_canonical_row_output(design, cfg, i, temp) for i in range(n + 1)]
        per_temp.append(row)
    lv = [min(row[i] for row in per_temp) for i in range(n + 1)]
    hv = [max(row[i] for row in per_temp) for i in range(n + 1)]
    return OutputEnvelope(lv=lv, hv=hv, grid=list(grid), per_temp=per_temp)


def baseline_envelope(design: Design, v_read: float, grid, n_cells: int = 8) -> OutputEnvelope:
    """Envelope of the 1FeFET-1R row (summed cell currents).

    Level i sums i on-cell and (n - i) off-cell read currents at each
    temperature.  NMR is scale-invariant, so the row output is expressed in
    units of the reference-temperature single-cell on-current; that keeps
    the degenerate-level guard (an absolute voltage width) meaningful.
    """
    if not grid:
        raise ValueError("temperature grid must be non-empty")
    bias = Bias(v_wl=v_read, v_bl=design.v_bl, v_sl=design.v_sl)
    i_ref = solve_baseline(
        _baseline_cell(design, 1), bias, Temperature(design.sweep[3])
    ).i_out
    per_temp = []
    for t_c in grid:
        temp = Temperature(t_c)
        i_on = solve_baseline(_baseline_cell(design, 1), bias, temp).i_out / i_ref
        i_off = solve_baseline(_baseline_cell(design, 0), bias, temp).i_out / i_ref
        per_temp.append([i * i_on + (n_cells - i) * i_off for i in range(n_cells + 1)])
    lv = [min(row[i] for row in per_temp) for i in range(n_cells + 1)]
    hv = [max(row[i] for row in per_temp) for i in range(n_cells + 1)]
    return OutputEnvelope(lv=lv, hv=hv, grid=list(grid), per_temp=per_temp)


def _baseline_cell(design: Design, stored_bit: int) -> CellInstance:
    state = FeFetState(Polarization.LOW_VT if stored_bit else Polarization.HIGH_VT)
    return CellInstance(
        CellKind.ONE_FEFET_ONE_R,
        design.fefet,
        state,
        r_load=design.r_load,
        c_o=design.c_o,
    )


def nmr(env: OutputEnvelope) -> NmrReport:
    """Noise-Margin-Rate per adjacent level pair, plus the minimum.

    Levels narrower than DEGENERATE_WIDTH get a +inf sentinel: a zero-width
    level cannot overlap its neighbor, and the sentinel is excluded from
    nmr_min unless every level is degenerate.
    """
    n_levels = env.levels()
    if n_levels < 2:
        raise ValueError("envelope needs at least two MAC levels")
    values = []
    degenerate = []
    for i in range(n_levels - 1):
        width = env.hv[i] - env.lv[i]
        gap = env.lv[i + 1] - env.hv[i]
        if width < DEGENERATE_WIDTH:
            degenerate.append(i)
            values.append(math.inf)
        else:
            values.append(gap / width)
    finite = [(v, i) for i, v in enumerate(values) if not math.isinf(v)]
    if finite:
        nmr_min, argmin = min(finite)
    else:
        nmr_min, argmin = math.inf, 0
    return NmrReport(nmr=values, nmr_min=nmr_min, argmin=argmin, degenerate=degenerate)


def calibrate_decode_thresholds(env: OutputEnvelope) -> tuple:
    """Midpoint thresholds between adjacent level ranges.

    Threshold i separates levels i and i+1 at (HV_i + LV_{i+1}) / 2.  Emits
    OverlapWarning (thresholds still produced) when any NMR_i <= 0.
    """
    report = nmr(env)
    if any((not math.isinf(v)) and v <= 0.0 for v in report.nmr):
        warnings.warn(
            "adjacent MAC levels overlap; decode not guaranteed", OverlapWarning
        )
    return tuple(
        0.5 * (env.hv[i] + env.lv[i + 1]) for i in range(env.levels() - 1)
    )


def default_row_config(design: Design, grid=None) -> RowConfig:
    """RowConfig with decode thresholds calibrated on the design's grid."""
    cfg = RowConfig(
        c_o=design.c_o,
        c_acc=design.c_acc,
        t_read=design.t_read,
        n_cells=design.n_cells,
    )
    if grid is None:
        t_min, t_max, t_step, _ = design.sweep
        grid = temperature_grid(t_min, t_max, t_step)
    env = envelope(design, cfg, grid)
    return replace(cfg, decode_thresholds=calibrate_decode_thresholds(env))


def temperature_grid(t_min: float, t_max: float, t_step: float) -> list:
    if t_step <= 0 or t_max < t_min:
        raise ValueError("bad temperature grid")
    n = int(round((t_max - t_min) / t_step))
    grid = [t_min + k * t_step for k in range(n + 1)]
    if grid[-1] > t_max + 1e-9:
        grid.pop()
    return grid
