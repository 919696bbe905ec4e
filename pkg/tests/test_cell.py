import math

import numpy as np
import pytest

from fecim.cell import (
    Bias,
    CellInstance,
    CellKind,
    NoBracketError,
    multiply,
    read_transient,
    solve_2t1f,
    solve_baseline,
)
from fecim.device import FeFetState, Polarization, Temperature

T27 = Temperature(27.0)


def baseline_cell(design, stored=1, offset=0.0):
    pol = Polarization.LOW_VT if stored else Polarization.HIGH_VT
    return CellInstance(
        CellKind.ONE_FEFET_ONE_R, design.fefet, FeFetState(pol, offset),
        r_load=design.r_load, c_o=design.c_o,
    )


def feedback_cell(design, stored=1, offset=0.0, c_o=None):
    pol = Polarization.LOW_VT if stored else Polarization.HIGH_VT
    return CellInstance(
        CellKind.TWO_T_ONE_FEFET, design.fefet, FeFetState(pol, offset),
        m1=design.m1, m2=design.m2, c_o=c_o if c_o is not None else design.c_o,
    )


class TestSolveBaseline:
    def test_high_vt_is_effectively_off(self, design):
        floor = design.fefet.leakage_floor * design.fefet.wl_ratio
        for v_read in (0.35, 1.3):
            for t_c in (0.0, 27.0, 85.0):
                op = solve_baseline(
                    baseline_cell(design, stored=0),
                    Bias(v_wl=v_read, v_bl=design.v_bl, v_sl=design.v_sl),
                    Temperature(t_c),
                )
                assert op.i_out <= 10.0 * floor

    def test_kcl_residual_contract(self, design):
        rng = np.random.default_rng(42)
        cell = baseline_cell(design)
        for _ in range(200):
            bias = Bias(v_wl=float(rng.uniform(0.0, 1.4)), v_bl=design.v_bl, v_sl=design.v_sl)
            temp = Temperature(float(rng.uniform(0.0, 85.0)))
            op = solve_baseline(cell, bias, temp)
            assert abs(op.residual) <= 1e-15
            assert op.converged

    def test_wrong_kind_rejected(self, design):
        with pytest.raises(ValueError):
            solve_baseline(feedback_cell(design), Bias(v_wl=0.35), T27)


class TestSolve2T1F:
    def test_kcl_residual_contract_random_triples(self, design):
        rng = np.random.default_rng(7)
        cell = feedback_cell(design)
        for _ in range(1000):
            bias = Bias(v_wl=float(rng.choice([0.0, 0.35])), v_bl=design.v_bl, v_sl=design.v_sl)
            temp = Temperature(float(rng.uniform(0.0, 85.0)))
            v_b = float(rng.uniform(design.v_sl, design.v_bl))
            op = solve_2t1f(cell, bias, temp, v_b)
            assert abs(op.residual) <= 1e-15
            assert design.v_sl <= op.v_a <= design.v_bl

    def test_output_current_rises_with_temperature(self, design):
        # Instantaneous subthreshold currents rise with T at fixed v_b;
        # compensation only appears in the integrated output.
        cell = feedback_cell(design)
        bias = Bias(v_wl=design.v_wl_on, v_bl=design.v_bl, v_sl=design.v_sl)
        for v_b in (0.0, 0.05, 0.10):
            outs = [
                solve_2t1f(cell, bias, Temperature(float(t)), v_b).i_out
                for t in np.arange(0.0, 86.0, 5.0)
            ]
            assert all(b > a for a, b in zip(outs, outs[1:]))

    def test_gate_source_accessors(self, design):
        cell = feedback_cell(design)
        bias = Bias(v_wl=design.v_wl_on, v_bl=design.v_bl, v_sl=design.v_sl)
        op = solve_2t1f(cell, bias, T27, 0.1)
        assert op.v_gs1 == pytest.approx(op.v_a - 0.1)
        assert op.v_gs2 == pytest.approx(0.1 - design.v_sl)

    def test_no_bracket_detected(self, design):
        # Degenerate window: lo == hi cannot bracket a sign change.
        cell = feedback_cell(design)
        bias = Bias(v_wl=0.35, v_bl=design.v_sl, v_sl=design.v_sl)
        with pytest.raises((NoBracketError, ValueError)):
            solve_2t1f(cell, bias, T27, design.v_sl)


class TestReadTransient:
    def test_stored_zero_barely_charges(self, design, golden):
        tr = read_transient(
            feedback_cell(design, stored=0),
            Bias(v_wl=design.v_wl_on, v_bl=design.v_bl, v_sl=design.v_sl),
            T27,
            design.t_read,
        )
        assert tr.v_o_final <= 0.05 * golden["v_unit_27c"]

    def test_samples_monotone_and_bounded(self, design):
        tr = read_transient(
            feedback_cell(design), Bias(v_wl=design.v_wl_on), T27, design.t_read
        )
        times = [s[0] for s in tr.samples]
        volts = [s[1] for s in tr.samples]
        assert times == sorted(times)
        assert volts == sorted(volts)
        assert tr.v_o_final <= design.v_bl
        assert all(i >= 0.0 for _, _, i in tr.samples)

    def test_halving_co_weakly_increases_output(self, design):
        big = read_transient(
            feedback_cell(design), Bias(v_wl=design.v_wl_on), T27, design.t_read
        ).v_o_final
        small = read_transient(
            feedback_cell(design, c_o=design.c_o / 2),
            Bias(v_wl=design.v_wl_on), T27, design.t_read,
        ).v_o_final
        assert small >= big

    def test_deterministic(self, design):
        a = read_transient(feedback_cell(design), Bias(v_wl=design.v_wl_on), T27, design.t_read)
        b = read_transient(feedback_cell(design), Bias(v_wl=design.v_wl_on), T27, design.t_read)
        assert a.v_o_final == b.v_o_final
        assert a.energy == b.energy
        assert a.samples == b.samples

    def test_energy_positive(self, design):
        tr = read_transient(feedback_cell(design), Bias(v_wl=design.v_wl_on), T27, design.t_read)
        assert tr.energy > 0.0

    def test_bad_t_read(self, design):
        with pytest.raises(ValueError):
            read_transient(feedback_cell(design), Bias(v_wl=0.35), T27, 0.0)


class TestMultiply:
    def test_unit_voltage_regression(self, design, golden):
        v, energy = multiply(
            feedback_cell(design), 1, 1, T27, design.t_read,
            v_bl=design.v_bl, v_sl=design.v_sl, v_wl_on=design.v_wl_on,
            c_wordline=design.c_wordline,
        )
        assert v == pytest.approx(golden["v_unit_27c"], rel=1e-9)
        assert energy > 0

    def test_and_semantics(self, design, golden):
        # Zero-product configurations charge to the leak level only.  The
        # calibrated leak is a sizeable fraction of a level (it sets the
        # level-0 NMR window), so the bound is the committed leak fraction.
        v11, _ = multiply(feedback_cell(design, stored=1), 1, 1, T27, design.t_read,
                          v_wl_on=design.v_wl_on)
        bound = 1.5 * golden["leak_fraction_27c"] * v11
        for bit_in, stored in [(0, 0), (0, 1), (1, 0)]:
            v, _ = multiply(feedback_cell(design, stored=stored), bit_in, stored, T27,
                            design.t_read, v_wl_on=design.v_wl_on)
            assert v <= bound

    def test_polarization_must_match(self, design):
        with pytest.raises(ValueError):
            multiply(feedback_cell(design, stored=0), 1, 1, T27, design.t_read)

    def test_output_within_committed_envelope(self, design, golden):
        lo, hi = golden["v_unit_envelope"]
        for t_c in np.arange(0.0, 86.0, 5.0):
            v, _ = multiply(feedback_cell(design), 1, 1, Temperature(float(t_c)),
                            design.t_read, v_wl_on=design.v_wl_on)
            assert lo <= v <= hi

    def test_self_limiting_sublinear_in_m1_strength(self, design):
        from dataclasses import replace

        v1, _ = multiply(feedback_cell(design), 1, 1, T27, design.t_read,
                         v_wl_on=design.v_wl_on)
        boosted = replace(design, m1=replace(design.m1, i0=2 * design.m1.i0))
        v2, _ = multiply(feedback_cell(boosted), 1, 1, T27, design.t_read,
                         v_wl_on=design.v_wl_on)
        assert v2 > v1
        assert v2 < 2 * v1
