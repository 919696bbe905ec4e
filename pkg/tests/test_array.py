import math

import numpy as np
import pytest

from fecim.array import (
    DEGENERATE_WIDTH,
    MacResult,
    NmrReport,
    OutputEnvelope,
    OverlapWarning,
    RowConfig,
    accumulation_energy,
    baseline_envelope,
    calibrate_decode_thresholds,
    cell_output,
    charge_share,
    decode,
    default_row_config,
    envelope,
    mac_row,
    nmr,
    temperature_grid,
)
from fecim.device import Temperature

from oracles import charge_conservation_voltage, popcount_and

T27 = Temperature(27.0)


def plain_cfg(n=8, c_o=1e-15, c_acc=2e-15):
    return RowConfig(c_o=c_o, c_acc=c_acc, t_read=6.9e-9, n_cells=n)


class TestChargeShare:
    def test_all_zero(self):
        assert charge_share([0.0] * 8, plain_cfg()) == 0.0

    def test_hand_case(self):
        # 8 cells, C_o = 1 fF, C_acc = 2 fF, sum V_Oi = 4 V:
        # Q/C = (1 fF * 4 V) / (10 fF) = 0.4 V.
        vo = [0.5] * 8
        assert charge_share(vo, plain_cfg()) == pytest.approx(0.4, rel=1e-12)

    def test_permutation_invariant(self):
        cfg = plain_cfg()
        rng = np.random.default_rng(3)
        vo = list(rng.uniform(0, 1.2, 8))
        base = charge_share(vo, cfg)
        for _ in range(10):
            rng.shuffle(vo)
            assert charge_share(vo, cfg) == pytest.approx(base, rel=1e-12)

    def test_against_charge_conservation_oracle(self):
        cfg = plain_cfg()
        rng = np.random.default_rng(11)
        for _ in range(1000):
            vo = list(rng.uniform(0.0, 1.2, 8))
            got = charge_share(vo, cfg)
            want = float(charge_conservation_voltage(vo, cfg.c_o, cfg.c_acc))
            assert got == pytest.approx(want, rel=1e-12)

    def test_length_validated(self):
        with pytest.raises(ValueError):
            charge_share([0.1] * 7, plain_cfg())

    def test_accumulation_energy_non_negative(self):
        cfg = plain_cfg()
        rng = np.random.default_rng(5)
        for _ in range(100):
            vo = list(rng.uniform(0.0, 1.0, 8))
            assert accumulation_energy(vo, cfg) >= 0.0


class TestRowConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RowConfig(c_o=0.0, c_acc=1e-15, t_read=1e-9)
        with pytest.raises(ValueError):
            RowConfig(c_o=1e-15, c_acc=1e-15, t_read=1e-9, n_cells=0)
        with pytest.raises(ValueError):
            RowConfig(c_o=1e-15, c_acc=1e-15, t_read=1e-9, decode_thresholds=(0.2, 0.1))


class TestDecode:
    def test_binary_search_matches_linear(self):
        thresholds = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
        for v in np.linspace(-0.05, 0.95, 101):
            want = sum(1 for t in thresholds if v >= t)
            assert decode(float(v), thresholds) == want


class TestMacRow:
    def test_all_ones(self, design, row_cfg):
        res = mac_row(design, [1] * 8, [1] * 8, T27, row_cfg)
        assert res.decoded == 8

    def test_zero_weights(self, design, row_cfg):
        rng = np.random.default_rng(1)
        for _ in range(5):
            inputs = list(rng.integers(0, 2, 8))
            res = mac_row(design, inputs, [0] * 8, T27, row_cfg)
            assert res.decoded == 0

    def test_exhaustive_patterns_at_reference(self, design, row_cfg):
        # All 256 input patterns x 9 canonical weight popcounts decode to
        # popcount(inputs AND weights) exactly with zero offsets.
        for wk in range(9):
            weights = [1] * wk + [0] * (8 - wk)
            for pattern in range(256):
                inputs = [(pattern >> b) & 1 for b in range(8)]
                res = mac_row(design, inputs, weights, T27, row_cfg)
                assert res.decoded == popcount_and(inputs, weights)

    def test_vacc_matches_charge_share_of_cells(self, design, row_cfg):
        res = mac_row(design, [1, 0, 1, 0, 1, 1, 0, 0], [1] * 8, T27, row_cfg)
        assert res.v_acc == pytest.approx(charge_share(res.per_cell_vo, row_cfg), rel=1e-12)

    def test_offsets_change_result(self, design, row_cfg):
        nominal = mac_row(design, [1] * 8, [1] * 8, T27, row_cfg)
        varied = mac_row(design, [1] * 8, [1] * 8, T27, row_cfg, offsets=[0.054] * 8)
        assert varied.v_acc != nominal.v_acc

    def test_length_validation(self, design, row_cfg):
        with pytest.raises(ValueError):
            mac_row(design, [1] * 7, [1] * 8, T27, row_cfg)
        with pytest.raises(ValueError):
            mac_row(design, [1] * 8, [1] * 8, T27, row_cfg, offsets=[0.0] * 3)


class TestEnvelope:
    def test_single_point_grid_degenerate(self, design, row_cfg):
        env = envelope(design, row_cfg, [27.0])
        assert env.lv == env.hv

    def test_levels_monotone(self, design, row_cfg):
        env = envelope(design, row_cfg, [0.0, 27.0, 85.0])
        assert all(b > a for a, b in zip(env.lv, env.lv[1:]))
        assert all(b > a for a, b in zip(env.hv, env.hv[1:]))

    def test_active_cell_choice_immaterial(self, design, row_cfg):
        # With identical cells, which cells are active cannot matter.
        v_on, _ = cell_output(design, 1, 1, T27, row_cfg)
        v_leak, _ = cell_output(design, 0, 1, T27, row_cfg)
        first3 = charge_share([v_on] * 3 + [v_leak] * 5, row_cfg)
        scattered = charge_share([v_leak, v_on, v_leak, v_on, v_leak, v_on, v_leak, v_leak], row_cfg)
        assert first3 == pytest.approx(scattered, rel=1e-12)

    def test_superposition_linearity(self, design, row_cfg):
        # Charge share is linear in the cell-voltage sum: level i equals
        # level 0 plus i times the level step exactly.
        env = envelope(design, row_cfg, [27.0])
        step = env.lv[1] - env.lv[0]
        for i in range(9):
            assert env.lv[i] == pytest.approx(env.lv[0] + i * step, rel=1e-9)

    def test_empty_grid_rejected(self, design, row_cfg):
        with pytest.raises(ValueError):
            envelope(design, row_cfg, [])


class TestNmr:
    def test_hand_envelope(self):
        env = OutputEnvelope(lv=[0.0, 3.0], hv=[1.0, 4.0], grid=[0.0], per_temp=[])
        rep = nmr(env)
        assert rep.nmr[0] == pytest.approx(2.0)
        assert rep.nmr_min == pytest.approx(2.0)
        assert rep.argmin == 0

    def test_touching_ranges_zero(self):
        env = OutputEnvelope(lv=[0.0, 1.0], hv=[1.0, 2.0], grid=[0.0], per_temp=[])
        assert nmr(env).nmr[0] == 0.0

    def test_overlap_negative(self):
        env = OutputEnvelope(lv=[0.0, 0.5], hv=[1.0, 2.0], grid=[0.0], per_temp=[])
        assert nmr(env).nmr[0] < 0.0

    def test_degenerate_level_sentinel(self):
        env = OutputEnvelope(
            lv=[0.0, 1.0, 3.0], hv=[0.0, 2.0, 4.0], grid=[0.0], per_temp=[]
        )
        rep = nmr(env)
        assert math.isinf(rep.nmr[0])
        assert rep.degenerate == [0]
        assert rep.nmr_min == pytest.approx((3.0 - 2.0) / (2.0 - 1.0))
        assert rep.argmin == 1

    def test_all_degenerate(self):
        env = OutputEnvelope(lv=[0.0, 1.0], hv=[0.0, 1.0], grid=[0.0], per_temp=[])
        rep = nmr(env)
        assert math.isinf(rep.nmr_min)

    def test_needs_two_levels(self):
        env = OutputEnvelope(lv=[0.0], hv=[0.1], grid=[0.0], per_temp=[])
        with pytest.raises(ValueError):
            nmr(env)


class TestDecodeThresholds:
    def test_touching_ranges_boundary(self):
        env = OutputEnvelope(lv=[0.0, 1.0], hv=[1.0, 2.0], grid=[0.0], per_temp=[])
        assert calibrate_decode_thresholds(env) == (1.0,)

    def test_hand_envelope_midpoint(self):
        env = OutputEnvelope(lv=[0.0, 3.0], hv=[1.0, 4.0], grid=[0.0], per_temp=[])
        assert calibrate_decode_thresholds(env) == (2.0,)

    def test_overlap_warns_but_produces(self):
        env = OutputEnvelope(lv=[0.0, 0.5], hv=[1.0, 2.0], grid=[0.0], per_temp=[])
        with pytest.warns(OverlapWarning):
            thresholds = calibrate_decode_thresholds(env)
        assert len(thresholds) == 1

    def test_grid_decode_recovers_levels(self, design, row_cfg):
        # Midpoint thresholds decode every grid-temperature v_acc exactly
        # whenever NMR_min > 0.
        grid = temperature_grid(0.0, 85.0, 5.0)
        env = envelope(design, row_cfg, grid)
        rep = nmr(env)
        assert rep.nmr_min > 0
        thresholds = calibrate_decode_thresholds(env)
        for row in env.per_temp:
            for level, v in enumerate(row):
                assert decode(v, thresholds) == level


class TestBaselineEnvelope:
    def test_subthreshold_row_overlaps(self, design):
        grid = temperature_grid(0.0, 85.0, 5.0)
        env = baseline_envelope(design, design.v_read_subthreshold, grid, 8)
        rep = nmr(env)
        assert rep.nmr_min < 0.0


class TestTemperatureGrid:
    def test_default_grid(self):
        grid = temperature_grid(0.0, 85.0, 5.0)
        assert len(grid) == 18
        assert grid[0] == 0.0 and grid[-1] == 85.0

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            temperature_grid(10.0, 0.0, 5.0)
