"""Solved electrical behavior of one cell.

Two topologies:

* baseline 1FeFET-1R: FeFET drain on BL, gate on WL (read voltage), source
  into a load resistor returning to SL.  The output is the DC series
  current through the stack.

* 2T-1FeFET feedback cell: FeFET drain->BL, source->node A, gate->WL;
  M2 drain->node A, source->SL, gate->node B; M1 drain->BL, source->node B
  (the output node, with C_o to ground), gate->node A.  During a read the
  cell multiplies input (WL level) by the stored state and charges C_o; as
  C_o charges, M2's gate rises, pulling node A down and cutting M1 off,
  which self-limits the output and compensates temperature drift of the
  integrated output voltage.

Node A carries no explicit capacitance and is solved algebraically at each
output voltage (quasi-static approximation).  Because the charging ODE
``c_o dv_b/dt = i_out(v_b)`` is autonomous and scalar with i_out > 0, the
read transient is integrated exactly by adaptive quadrature of
``t(v) = c_o * \\int dv / i_out(v)`` instead of explicit time stepping; an
explicit stepper would be stability-limited to picosecond steps on the
self-limited plateau while the quadrature needs a few hundred evaluations
regardless of how hard the cell saturates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .device import (
    DeviceParams,
    FeFetState,
    Temperature,
    drain_current,
    drain_current_and_grads,
    effective_vth,
)

KCL_TOLERANCE = 1e-15       # A, converged-node residual contract
BISECTION_WIDTH = 1e-3      # V, bracket width before switching to Newton
SOLVER_BUDGET = 200
QUAD_REL_TOL = 1e-7         # relative tolerance on the charging-time integral
QUAD_MAX_DEPTH = 48


class NoConvergenceError(RuntimeError):
    """Node solve did not reach the residual tolerance within budget."""


class NoBracketError(RuntimeError):
    """KCL balance has no sign change on [v_sl, v_bl]; bad topology/params."""


class StepUnderflowError(RuntimeError):
    """Transient quadrature could not resolve an interval."""


class CellKind(enum.Enum):
    ONE_FEFET_ONE_R = "1fefet-1r"
    TWO_T_ONE_FEFET = "2t-1fefet"


@dataclass(frozen=True)
class Bias:
    """Line voltages; defaults match the MAC read condition."""

    v_wl: float
    v_bl: float = 1.2
    v_sl: float = 0.2


@dataclass(frozen=True)
class CellInstance:
    kind: CellKind
    fefet_params: DeviceParams
    fefet_state: FeFetState
    m1: DeviceParams | None = None
    m2: DeviceParams | None = None
    r_load: float | None = None
    c_o: float = 1e-15

    def __post_init__(self):
        if self.kind is CellKind.ONE_FEFET_ONE_R:
            if self.r_load is None or self.r_load <= 0:
                raise ValueError("baseline cell requires r_load > 0")
        else:
            if self.m1 is None or self.m2 is None:
                raise ValueError("2T-1FeFET cell requires m1 and m2 params")
        if self.c_o <= 0:
            raise ValueError("c_o must be positive")


@dataclass
class OperatingPoint:
    """Solved node voltages and branch currents at one bias/temperature."""

    v_a: float
    v_b: float
    i_fefet: float
    i_m1: float
    i_m2: float
    i_out: float
    converged: bool
    iterations: int
    residual: float
    bias: Bias

    @property
    def v_gs1(self) -> float:
        """Gate-source voltage of M1 (gate at node A, source at node B)."""
        return self.v_a - self.v_b

    @property
    def v_gs2(self) -> float:
        """Gate-source voltage of M2 (gate at node B, source on SL)."""
        return self.v_b - self.bias.v_sl


@dataclass
class ReadTransient:
    samples: list          # (t, v_b, i_out) tuples, t ascending
    v_o_final: float
    energy: float          # J drawn from the supplies during the read


def _fefet_current(cell: CellInstance, v_gs: float, v_ds: float, temp: Temperature) -> float:
    vth = effective_vth(cell.fefet_params, cell.fefet_state, temp)
    return drain_current(cell.fefet_params, vth, v_gs, v_ds, temp)


def _mos_current(params: DeviceParams, v_gs: float, v_ds: float, temp: Temperature) -> float:
    vth = params.vth_ref + params.kappa_t * (temp.kelvin - 300.0)
    return drain_current(params, vth, v_gs, v_ds, temp)


def _solve_bracketed(fdf, lo: float, hi: float):
    """Root of strictly-decreasing f on [lo, hi]: bisection then Newton polish.

    ``fdf(x)`` returns (f, df/dx).  Returns (root, f(root), iterations);
    requires f(lo) >= 0 >= f(hi).
    """
    f_lo, _ = fdf(lo)
    f_hi, _ = fdf(hi)
    iters = 2
    if f_lo < 0 or f_hi > 0:
        raise NoBracketError(
            f"no sign change on bracket [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}"
        )
    if f_lo == 0.0:
        return lo, 0.0, iters
    if f_hi == 0.0:
        return hi, 0.0, iters
    a, b = lo, hi
    while (b - a) > BISECTION_WIDTH and iters < SOLVER_BUDGET:
        mid = 0.5 * (a + b)
        fm, _ = fdf(mid)
        iters += 1
        if fm > 0.0:
            a = mid
        else:
            b = mid
    x = 0.5 * (a + b)
    fx, dfx = fdf(x)
    iters += 1
    best_x, best_f = x, fx
    while abs(fx) > KCL_TOLERANCE and iters < SOLVER_BUDGET:
        if dfx == 0.0:
            break
        step = fx / dfx
        x_new = x - step
        if not (a <= x_new <= b):
            # Newton left the bracket: fall back to a bisection move.
            x_new = 0.5 * (a + b)
        fx, dfx = fdf(x_new)
        iters += 1
        x = x_new
        if fx > 0.0 and x < b:
            a = max(a, x)
        elif fx < 0.0 and x > a:
            b = min(b, x)
        if abs(fx) < abs(best_f):
            best_x, best_f = x, fx
        if abs(step) < 1e-18:
            break
    if abs(best_f) > KCL_TOLERANCE:
        raise NoConvergenceError(
            f"residual {best_f:.3e} A after {iters} iterations (budget {SOLVER_BUDGET})"
        )
    return best_x, best_f, iters


def solve_baseline(cell: CellInstance, bias: Bias, temp: Temperature) -> OperatingPoint:
    """DC solve of the 1FeFET-1R stack: I_fefet(v_x) = (v_x - v_sl)/r_load."""
    if cell.kind is not CellKind.ONE_FEFET_ONE_R:
        raise ValueError("solve_baseline requires a 1FeFET-1R cell")
    vth_fe = effective_vth(cell.fefet_params, cell.fefet_state, temp)

    def kcl(v_x: float):
        i_fe, dg, dd = drain_current_and_grads(
            cell.fefet_params, vth_fe, bias.v_wl - v_x, bias.v_bl - v_x, temp
        )
        f = i_fe - (v_x - bias.v_sl) / cell.r_load
        df = -dg - dd - 1.0 / cell.r_load
        return f, df

    v_x, residual, iters = _solve_bracketed(kcl, bias.v_sl, bias.v_bl)
    i_out = (v_x - bias.v_sl) / cell.r_load
    return OperatingPoint(
        v_a=v_x,
        v_b=v_x,
        i_fefet=_fefet_current(cell, bias.v_wl - v_x, bias.v_bl - v_x, temp),
        i_m1=0.0,
        i_m2=0.0,
        i_out=i_out,
        converged=True,
        iterations=iters,
        residual=residual,
        bias=bias,
    )


def solve_2t1f(
    cell: CellInstance,
    bias: Bias,
    temp: Temperature,
    v_b: float,
    v_a_hint: float | None = None,
) -> OperatingPoint:
    """Solve node A with the output node pinned at v_b (quasi-static).

    KCL at node A balances the FeFET (BL -> A) against M2 (A -> SL); the
    balance is strictly decreasing in v_a and changes sign on [v_sl, v_bl],
    so bisection is guaranteed a root.  ``v_a_hint`` warm-starts the Newton
    polish during transient sweeps.
    """
    if cell.kind is not CellKind.TWO_T_ONE_FEFET:
        raise ValueError("solve_2t1f requires a 2T-1FeFET cell")
    v_gs2 = v_b - bias.v_sl
    vth_fe = effective_vth(cell.fefet_params, cell.fefet_state, temp)
    vth_m2 = cell.m2.vth_ref + cell.m2.kappa_t * (temp.kelvin - 300.0)

    def kcl(v_a: float):
        i_fe, dg_fe, dd_fe = drain_current_and_grads(
            cell.fefet_params, vth_fe, bias.v_wl - v_a, bias.v_bl - v_a, temp
        )
        i_m2, _, dd_m2 = drain_current_and_grads(
            cell.m2, vth_m2, v_gs2, v_a - bias.v_sl, temp
        )
        return i_fe - i_m2, -dg_fe - dd_fe - dd_m2

    iters_hint = 0
    v_a = residual = None
    if v_a_hint is not None and bias.v_sl < v_a_hint < bias.v_bl:
        # Newton from the hint; falls back to the bracketed solve on failure.
        x = v_a_hint
        fx, dfx = kcl(x)
        iters_hint = 1
        while iters_hint < 40:
            if abs(fx) <= KCL_TOLERANCE:
                v_a, residual = x, fx
                break
            if dfx == 0.0:
                break
            x_new = x - fx / dfx
            if not (bias.v_sl <= x_new <= bias.v_bl):
                break
            x = x_new
            fx, dfx = kcl(x)
            iters_hint += 1
    if v_a is None:
        v_a, residual, iters = _solve_bracketed(kcl, bias.v_sl, bias.v_bl)
        iters += iters_hint
    else:
        iters = iters_hint

    i_fe = _fefet_current(cell, bias.v_wl - v_a, bias.v_bl - v_a, temp)
    i_m2 = _mos_current(cell.m2, v_gs2, v_a - bias.v_sl, temp)
    i_m1 = _mos_current(cell.m1, v_a - v_b, bias.v_bl - v_b, temp)
    return OperatingPoint(
        v_a=v_a,
        v_b=v_b,
        i_fefet=i_fe,
        i_m1=i_m1,
        i_m2=i_m2,
        i_out=i_m1,
        converged=True,
        iterations=iters,
        residual=residual,
        bias=bias,
    )


class _OutputCurrent:
    """i_out(v_b) with node-A continuation between evaluations."""

    def __init__(self, cell: CellInstance, bias: Bias, temp: Temperature):
        self.cell = cell
        self.bias = bias
        self.temp = temp
        self.v_a_hint = None
        self.cache: dict[float, tuple[float, float]] = {}

    def __call__(self, v_b: float) -> float:
        return self.eval(v_b)[0]

    def eval(self, v_b: float) -> tuple[float, float]:
        """Returns (i_out, i_fefet) at the solved node A."""
        hit = self.cache.get(v_b)
        if hit is not None:
            return hit
        op = solve_2t1f(self.cell, self.bias, self.temp, v_b, self.v_a_hint)
        self.v_a_hint = op.v_a
        out = (op.i_out, op.i_fefet)
        self.cache[v_b] = out
        return out


def _simpson(f_a: float, f_m: float, f_b: float, h: float) -> float:
    return h / 6.0 * (f_a + 4.0 * f_m + f_b)


def _exp_rule(f_a: float, f_b: float, h: float) -> float:
    """Integral of f over an interval of width h assuming ln f is linear.

    Exact for f = A*exp(s*v); the output current is piecewise log-linear in
    v_b to high accuracy, so this converges in far fewer evaluations than a
    polynomial rule across the cell's on/off knee.
    """
    if f_a <= 0.0 or f_b <= 0.0:
        return 0.5 * (f_a + f_b) * h
    r = math.log(f_b / f_a)
    if abs(r) < 1e-8:
        return 0.5 * (f_a + f_b) * h
    return h * (f_b - f_a) / r


def read_transient(
    cell: CellInstance, bias: Bias, temp: Temperature, t_read: float
) -> ReadTransient:
    """Charge C_o through M1 for t_read seconds starting from v_b = 0.

    Integrates t(v) = c_o * int dv / i_out(v) by adaptive Simpson quadrature
    and inverts the final interval for v_b(t_read).  Returns the sampled
    (t, v_b, i_out) trajectory, the final output voltage, and the read
    energy: BL dissipation through M1 (c_o * int (v_bl - v) dv, exact for
    the charging path), the FeFET/M2 static path burn, and the word-line
    input-drive loss.
    """
    if t_read <= 0:
        raise ValueError("t_read must be positive")
    current = _OutputCurrent(cell, bias, temp)
    c_o = cell.c_o
    # Per-leaf absolute time-error budget.  v_final precision is governed by
    # the big-time leaves near the crossing (relative test); leaves carrying
    # under ~1e-6 of the read window cannot move v_final measurably and are
    # accepted outright, which keeps the fast-charging region cheap.
    abs_floor = 1e-6 * t_read

    v_stop = bias.v_bl - 1e-9
    n_seed = 24
    dv = v_stop / n_seed

    def f_of(v: float) -> float:
        return c_o / current(v)

    def invert_leaf(a, b, f_a, f_b, dt_remaining):
        """v inside a converged leaf at which the remaining time elapses."""
        if f_a <= 0.0 or f_b <= 0.0 or f_a == f_b:
            return a + (b - a) * dt_remaining / max(_exp_rule(f_a, f_b, b - a), 1e-300)
        s = math.log(f_b / f_a) / (b - a)
        if abs(s) < 1e-8:
            return min(b, a + dt_remaining / f_a)
        # t(v) - t(a) = f_a*(exp(s*(v-a)) - 1)/s
        arg = 1.0 + s * dt_remaining / f_a
        if arg <= 0.0:
            return b
        return min(b, a + math.log(arg) / s)

    samples = [(0.0, 0.0, current(0.0))]
    t_acc = 0.0
    e_static = 0.0
    v_final = None
    v_span = bias.v_bl - bias.v_sl

    # Left-to-right adaptive walk: a stack of pending intervals, splitting
    # until the local log-linear model converges, stopping at the read time.
    stack = []
    for k in range(n_seed, 0, -1):
        stack.append(((k - 1) * dv, k * dv))
    while stack:
        a, b = stack.pop()
        f_a = f_of(a)
        f_b = f_of(b)
        m = 0.5 * (a + b)
        f_m = f_of(m)
        whole = _exp_rule(f_a, f_b, b - a)
        refined = _exp_rule(f_a, f_m, m - a) + _exp_rule(f_m, f_b, b - m)
        err = abs(refined - whole)
        depth_ok = (b - a) > (dv / 2**QUAD_MAX_DEPTH)
        # The midpoint-agreement estimate is only trustworthy when the
        # integrand stays single-scale inside the leaf; force subdivision
        # while it spans more than ~one e-fold.
        wide = (
            abs(math.log(max(f_m, 1e-300) / max(f_a, 1e-300))) > 0.7
            or abs(math.log(max(f_b, 1e-300) / max(f_m, 1e-300))) > 0.7
        )
        if (wide or err > max(QUAD_REL_TOL * refined, abs_floor)) and depth_ok:
            stack.append((m, b))
            stack.append((a, m))
            continue
        if (b - a) <= dv / 2**QUAD_MAX_DEPTH and err > 1e3 * abs_floor:
            raise StepUnderflowError(
                f"quadrature stalled at v_b in [{a}, {b}] (err {err:.2e})"
            )
        # Accepted leaf: either consume its time or locate the crossing.
        dt_left = _exp_rule(f_a, f_m, m - a)
        dt_right = _exp_rule(f_m, f_b, b - m)
        crossed = False
        for (la, lb, lfa, lfb, ldt) in (
            (a, m, f_a, f_m, dt_left),
            (m, b, f_m, f_b, dt_right),
        ):
            if t_acc + ldt >= t_read:
                v_final = invert_leaf(la, lb, lfa, lfb, t_read - t_acc)
                i_fin, i_fe_fin = current.eval(v_final)
                # Static-path burn over the partial leaf.
                g_a = c_o * current.eval(la)[1] / current.eval(la)[0]
                g_f = c_o * i_fe_fin / i_fin
                e_static += _exp_rule(g_a, g_f, v_final - la) * v_span
                samples.append((t_read, v_final, i_fin))
                crossed = True
                break
            t_acc += ldt
            i_lb, i_fe_lb = current.eval(lb)
            g_a = c_o * current.eval(la)[1] / current.eval(la)[0]
            g_b = c_o * i_fe_lb / i_lb
            e_static += _exp_rule(g_a, g_b, lb - la) * v_span
            samples.append((t_acc, lb, i_lb))
        if crossed:
            break
    if v_final is None:
        # Output railed at BL before the read window closed.
        v_final = v_stop
        samples.append((t_read, v_final, current(v_final)))

    # Energy delivered by BL through the M1 charging path:
    # c_o * int (v_bl - v) dv, exact given v_final.
    e_bl = c_o * (bias.v_bl * v_final - 0.5 * v_final * v_final)
    return ReadTransient(samples=samples, v_o_final=v_final, energy=e_bl + e_static)


def multiply(
    cell: CellInstance,
    input_bit: int,
    stored_bit: int,
    temp: Temperature,
    t_read: float,
    v_bl: float = 1.2,
    v_sl: float = 0.2,
    v_wl_on: float = 0.35,
    c_wordline: float = 0.0,
) -> tuple[float, float]:
    """One multiplication: returns (v_o_final, energy).

    input_bit selects the word-line level (v_wl_on or 0); the cell must
    already be programmed to stored_bit.  The result is the charged C_o
    voltage after t_read; it is near the leak level unless
    input_bit = stored_bit = 1.
    """
    from .device import Polarization  # local alias to avoid cycle noise

    want = Polarization.LOW_VT if stored_bit else Polarization.HIGH_VT
    if cell.fefet_state.polarization is not want:
        raise ValueError("cell polarization does not match stored_bit")
    v_wl = v_wl_on if input_bit else 0.0
    bias = Bias(v_wl=v_wl, v_bl=v_bl, v_sl=v_sl)
    tr = read_transient(cell, bias, temp, t_read)
    e_wl = 0.5 * c_wordline * v_wl * v_wl
    return tr.v_o_final, tr.energy + e_wl
