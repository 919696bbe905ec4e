"""Temperature-dependent compact models for the FeFET and generic n-MOSFETs.

The drain-current model is a single-piece EKV-style interpolation

    I_ch = i0 * wl_ratio * (T/300K)^i0_t_exponent
           * ln^2(1 + exp((v_gs - vth_eff) / (2 * n_slope * U_T)))

    I_d  = (I_ch * (1 + lambda_ * v_ds) + leakage_floor * wl_ratio)
           * (1 - exp(-v_ds / U_T))

which is C-infinity everywhere, reduces to the subthreshold exponential
I = i0 * wl * (T/300)^m * exp((v_gs - vth)/(n*U_T)) for v_gs << vth, and
rolls into a smooth square law with channel-length modulation above
threshold.  The constant leakage floor keeps node solvers away from exact
zeros; set ``leakage_floor=0`` when checking the pure exponential law.

The FeFET is the same transistor with two nonvolatile threshold states
(low-VT / high-VT) selected by the polarization of its gate stack, plus an
optional per-device threshold offset used for process-variation sampling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import (
    CELSIUS_OFFSET,
    T_MAX_CELSIUS,
    T_MIN_CELSIUS,
    T_REF_KELVIN,
    thermal_voltage,
)

ON_OFF_RATIO_CAP = 1e12


class TemperatureRangeError(ValueError):
    """Operating temperature outside the calibrated validity window."""


class Polarization(enum.Enum):
    LOW_VT = "low_vt"
    HIGH_VT = "high_vt"


@dataclass(frozen=True)
class Temperature:
    """Operating temperature; valid between -25 degC and +125 degC."""

    celsius: float

    def __post_init__(self):
        if not (T_MIN_CELSIUS <= self.celsius <= T_MAX_CELSIUS):
            raise TemperatureRangeError(
                f"temperature {self.celsius} degC outside "
                f"[{T_MIN_CELSIUS}, {T_MAX_CELSIUS}] degC validity range"
            )

    @property
    def kelvin(self) -> float:
        return self.celsius + CELSIUS_OFFSET

    @property
    def u_t(self) -> float:
        """Thermal voltage kT/q (V)."""
        return thermal_voltage(self.kelvin)


@dataclass(frozen=True)
class FeFetState:
    """Nonvolatile polarization state plus a fixed per-device Vth offset."""

    polarization: Polarization = Polarization.HIGH_VT
    vth_offset: float = 0.0


@dataclass(frozen=True)
class WritePulse:
    """Gate programming pulse; amplitude is signed (V), duration in seconds."""

    amplitude: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")


# Programming thresholds: a +4 V / 115 ns pulse sets low-VT ('1'),
# a -4 V / 200 ns pulse sets high-VT ('0'); weaker pulses are no-ops.
SET_AMPLITUDE = 4.0
SET_DURATION = 115e-9
RESET_AMPLITUDE = -4.0
RESET_DURATION = 200e-9


@dataclass(frozen=True)
class DeviceParams:
    """Compact-model parameters for one transistor.

    i0             current prefactor (A) at 300 K for W/L = 1
    wl_ratio       width/length multiplier (dimensionless)
    n_slope        subthreshold ideality factor, within [1, 3]
    vth_ref        threshold voltage at 300 K (V); low-VT state for a FeFET
    kappa_t        threshold tempco (V/K), typically negative
    i0_t_exponent  power-law temperature exponent of the prefactor
    lambda_        channel-length-modulation coefficient (1/V)
    vth_ref_high   high-VT state threshold at 300 K (FeFET only); defaults
                   to vth_ref for ordinary MOSFETs
    leakage_floor  constant off-current floor (A, scaled by wl_ratio)
    """

    i0: float
    wl_ratio: float
    n_slope: float
    vth_ref: float
    kappa_t: float
    i0_t_exponent: float
    lambda_: float = 0.0
    vth_ref_high: float | None = None
    leakage_floor: float = 1e-14

    def __post_init__(self):
        if self.i0 <= 0:
            raise ValueError("i0 must be positive")
        if self.wl_ratio <= 0:
            raise ValueError("wl_ratio must be positive")
        if not (1.0 <= self.n_slope <= 3.0):
            raise ValueError("n_slope must lie in [1, 3]")
        if self.leakage_floor < 0:
            raise ValueError("leakage_floor must be non-negative")

    @property
    def vth_high(self) -> float:
        return self.vth_ref if self.vth_ref_high is None else self.vth_ref_high


def effective_vth(params: DeviceParams, state: FeFetState, temp: Temperature) -> float:
    """Threshold of the selected polarization at temperature T.

    vth(T) = vth_ref(state) + kappa_t * (T - 300 K) + vth_offset
    """
    base = (
        params.vth_ref
        if state.polarization is Polarization.LOW_VT
        else params.vth_high
    )
    return base + params.kappa_t * (temp.kelvin - T_REF_KELVIN) + state.vth_offset


def drain_current(
    params: DeviceParams,
    vth_eff: float,
    v_gs: float,
    v_ds: float,
    temp: Temperature,
) -> float:
    """Drain current (A) of the behavioral transistor model.

    n-type convention: callers orient terminals so v_ds >= 0.  Returns
    exactly 0 at v_ds = 0 and is strictly increasing in v_gs for v_ds > 0.
    """
    if v_ds < 0:
        raise ValueError("v_ds must be non-negative (orient terminals)")
    u_t = temp.u_t
    x = (v_gs - vth_eff) / (2.0 * params.n_slope * u_t)
    # ln(1 + exp(x)) evaluated without overflow on either side.
    g = np.logaddexp(0.0, x)
    i_ch = (
        params.i0
        * params.wl_ratio
        * (temp.kelvin / T_REF_KELVIN) ** params.i0_t_exponent
        * g
        * g
    )
    drain_factor = -math.expm1(-v_ds / u_t)
    floor = params.leakage_floor * params.wl_ratio
    return (i_ch * (1.0 + params.lambda_ * v_ds) + floor) * drain_factor


def drain_current_and_grads(
    params: DeviceParams,
    vth_eff: float,
    v_gs: float,
    v_ds: float,
    temp: Temperature,
) -> tuple[float, float, float]:
    """(I_d, dI/dv_gs, dI/dv_ds) in closed form, for Newton node solvers."""
    if v_ds < 0:
        raise ValueError("v_ds must be non-negative (orient terminals)")
    u_t = temp.u_t
    two_n_ut = 2.0 * params.n_slope * u_t
    x = (v_gs - vth_eff) / two_n_ut
    g = np.logaddexp(0.0, x)
    # logistic(x), stable on both sides
    sig = math.exp(x - g) if x < 30 else 1.0
    pref = (
        params.i0
        * params.wl_ratio
        * (temp.kelvin / T_REF_KELVIN) ** params.i0_t_exponent
    )
    i_ch = pref * g * g
    lam_f = 1.0 + params.lambda_ * v_ds
    floor = params.leakage_floor * params.wl_ratio
    exp_term = math.exp(-v_ds / u_t)
    drain_factor = -math.expm1(-v_ds / u_t)
    core = i_ch * lam_f + floor
    i_d = core * drain_factor
    di_dvgs = pref * 2.0 * g * sig / two_n_ut * lam_f * drain_factor
    di_dvds = i_ch * params.lambda_ * drain_factor + core * exp_term / u_t
    return i_d, di_dvgs, di_dvds


def program(state: FeFetState, pulse: WritePulse) -> FeFetState:
    """Apply a write pulse; returns the (possibly unchanged) new state.

    Programming is threshold-gated and instantaneous: pulses below the
    amplitude/duration thresholds leave the polarization untouched.  The
    per-device vth_offset is preserved.
    """
    if pulse.amplitude >= SET_AMPLITUDE and pulse.duration >= SET_DURATION:
        return replace(state, polarization=Polarization.LOW_VT)
    if pulse.amplitude <= RESET_AMPLITUDE and pulse.duration >= RESET_DURATION:
        return replace(state, polarization=Polarization.HIGH_VT)
    return state


def program_bit(state: FeFetState, bit: int) -> FeFetState:
    """Program a logical bit: 1 -> low-VT, 0 -> high-VT."""
    pulse = (
        WritePulse(SET_AMPLITUDE, SET_DURATION)
        if bit
        else WritePulse(RESET_AMPLITUDE, RESET_DURATION)
    )
    return program(state, pulse)


def on_off_ratio(
    params: DeviceParams, temp: Temperature, v_read: float, v_ds: float
) -> float:
    """I_on/I_off between the low-VT and high-VT states at the given bias.

    Saturates at 1e12 if the off current underflows.
    """
    on_state = FeFetState(Polarization.LOW_VT)
    off_state = FeFetState(Polarization.HIGH_VT)
    i_on = drain_current(params, effective_vth(params, on_state, temp), v_read, v_ds, temp)
    i_off = drain_current(params, effective_vth(params, off_state, temp), v_read, v_ds, temp)
    if i_off <= 0.0 or i_on / i_off > ON_OFF_RATIO_CAP:
        return ON_OFF_RATIO_CAP
    return i_on / i_off


def sample_vth_offsets(sigma: float, count: int, seed: int) -> np.ndarray:
    """Gaussian N(0, sigma) threshold offsets, deterministic for a given seed."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    if sigma == 0.0:
        return np.zeros(count)
    return rng.normal(0.0, sigma, count)
