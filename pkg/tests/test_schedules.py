import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdd.grid import Shape
from hdd.schedules import (
    ChurnParams,
    NoiseSchedule,
    ShapeSchedule,
    equally_spaced_shapes,
    identity_shapes,
    karras_sigmas,
    log_uniform_sigmas,
    normalized_mean_area,
    parse_schedule_lines,
    pixel_total,
    schedule_lines,
    speedup,
    tandem_shapes,
    unit_shrink_shapes,
    unit_shrink_speedup_closed_form,
)

from .oracles import karras_sigma_reference


class TestKarrasSigmas:
    def test_endpoints_exact(self):
        s = karras_sigmas(0.002, 80.0, 7.0, 50)
        assert s.sigmas[0] == 80.0
        assert s.sigmas[-1] == 0.002
        assert s.T == 50

    def test_two_point(self):
        eps = 1e-9
        s = karras_sigmas(1.0, 1.0 + eps, 7.0, 2)
        assert s.sigmas == (1.0 + eps, 1.0)

    def test_strictly_decreasing(self):
        s = karras_sigmas(0.002, 80.0, 7.0, 50)
        assert all(a > b for a, b in zip(s.sigmas, s.sigmas[1:]))

    def test_interior_matches_scalar_reference(self):
        s = karras_sigmas(0.002, 80.0, 7.0, 50)
        for i in (1, 10, 25, 40, 48):
            ref = karras_sigma_reference(0.002, 80.0, 7.0, 50, i)
            assert s.sigmas[i] == pytest.approx(ref, rel=1e-14)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            karras_sigmas(0.002, 80.0, 7.0, 1)
        with pytest.raises(ValueError):
            karras_sigmas(-1.0, 80.0, 7.0, 10)
        with pytest.raises(ValueError):
            karras_sigmas(80.0, 0.002, 7.0, 10)

    def test_single_sigma_schedule_type(self):
        s = NoiseSchedule((0.5,), sigma_min=0.5, sigma_max=0.5)
        assert s.T == 1
        assert s.sigma_at(1) == 0.5

    def test_sigma_at_indexing(self):
        s = karras_sigmas(0.002, 80.0, 7.0, 10)
        assert s.sigma_at(10) == 80.0  # coarsest step carries max noise
        assert s.sigma_at(1) == 0.002

    def test_log_uniform_grid(self):
        s = log_uniform_sigmas(0.1, 10.0, 5)
        ratios = [a / b for a, b in zip(s.sigmas, s.sigmas[1:])]
        assert np.allclose(ratios, ratios[0])
        assert s.sigmas[0] == 10.0 and s.sigmas[-1] == 0.1


class TestShapeFamilies:
    def test_equally_spaced_5_5_3(self):
        s = equally_spaced_shapes(5, 5, 3)
        assert [(x.h, x.w) for x in s.shapes] == [(5, 5), (3, 3), (1, 1)]

    def test_equally_spaced_endpoints(self):
        s = equally_spaced_shapes(17, 23, 2)
        assert [(x.h, x.w) for x in s.shapes] == [(17, 23), (1, 1)]

    def test_equally_spaced_large_matches_formula(self):
        s = equally_spaced_shapes(144, 272, 50)
        for t in range(1, 51):
            h = 144 - (t - 1) / 49 * 143
            w = 272 - (t - 1) / 49 * 271
            assert s.shape_at(t) == Shape(max(1, round(h)), max(1, round(w)))

    def test_unit_shrink_no_clamping(self):
        s = unit_shrink_shapes(144, 272, 50)
        assert s.shape_at(1) == Shape(144, 272)
        assert s.shape_at(50) == Shape(95, 223)
        for t in range(2, 51):
            assert s.shape_at(t - 1).h - s.shape_at(t).h == 1
            assert s.shape_at(t - 1).w - s.shape_at(t).w == 1

    def test_unit_shrink_clamping(self):
        s = unit_shrink_shapes(3, 3, 5)
        assert [(x.h, x.w) for x in s.shapes] == [(3, 3), (2, 2), (1, 1), (1, 1), (1, 1)]

    def test_unit_shrink_single_step(self):
        s = unit_shrink_shapes(9, 7, 1)
        assert [(x.h, x.w) for x in s.shapes] == [(9, 7)]

    def test_tandem_k1_equals_equally_spaced(self):
        for H, W, T in [(8, 8, 6), (144, 272, 50), (5, 9, 4)]:
            assert tandem_shapes(H, W, T, 1).shapes == equally_spaced_shapes(H, W, T).shapes

    def test_tandem_k_equals_T_is_constant(self):
        s = tandem_shapes(12, 10, 7, 7)
        assert all(x == Shape(12, 10) for x in s.shapes)

    def test_tandem_8_8_6_2(self):
        s = tandem_shapes(8, 8, 6, 2)
        assert [(x.h, x.w) for x in s.shapes] == [(8, 8), (8, 8), (4, 4), (4, 4), (1, 1), (1, 1)]

    def test_tandem_rejects_k_above_T(self):
        with pytest.raises(ValueError):
            tandem_shapes(8, 8, 4, 5)

    def test_identity(self):
        s = identity_shapes(4, 4, 3)
        assert [(x.h, x.w) for x in s.shapes] == [(4, 4)] * 3
        assert normalized_mean_area(s) == 1.0

    def test_schedule_invariants_all_families(self):
        for s in (
            equally_spaced_shapes(31, 17, 9),
            unit_shrink_shapes(31, 17, 9),
            tandem_shapes(31, 17, 9, 3),
            identity_shapes(31, 17, 9),
        ):
            assert s.shapes[0] == s.full
            for a, b in zip(s.shapes, s.shapes[1:]):
                assert b.h <= a.h and b.w <= a.w

    def test_monotonicity_enforced_by_type(self):
        with pytest.raises(ValueError, match="non-increasing"):
            ShapeSchedule((Shape(4, 4), Shape(2, 4), Shape(3, 4)), Shape(4, 4))


class TestBudgetCalculus:
    def test_identity_alpha_one_speedup_one(self):
        s = identity_shapes(10, 20, 5)
        assert normalized_mean_area(s) == 1.0
        assert speedup(s) == 1.0

    def test_equally_spaced_5_5_3_hand_sum(self):
        s = equally_spaced_shapes(5, 5, 3)
        assert pixel_total(s) == 25 + 9 + 1
        assert normalized_mean_area(s) == pytest.approx(7 / 15, abs=1e-15)

    def test_equally_spaced_continuous_limit(self):
        for H, W in [(144, 272), (64, 64)]:
            s = equally_spaced_shapes(H, W, 600)
            assert abs(normalized_mean_area(s) - 1 / 3) < 0.01
            assert abs(speedup(s) - 3.0) < 0.1

    def test_unit_shrink_paper_example(self):
        s = unit_shrink_shapes(144, 272, 50)
        assert normalized_mean_area(s) == pytest.approx(0.760, abs=1e-3)
        assert speedup(s) == pytest.approx(1.32, abs=1e-2)

    def test_closed_form_matches_paper_example(self):
        assert unit_shrink_speedup_closed_form(144, 272, 50) == pytest.approx(1.32, abs=1e-2)

    def test_closed_form_no_shrink(self):
        assert unit_shrink_speedup_closed_form(10, 12, 1) == 1.0

    def test_closed_form_matches_enumeration(self):
        s = unit_shrink_shapes(10, 10, 5)
        assert unit_shrink_speedup_closed_form(10, 10, 5) == pytest.approx(
            speedup(s), rel=1e-12
        )

    def test_closed_form_rejects_clamped_regime(self):
        with pytest.raises(ValueError, match="clamping"):
            unit_shrink_speedup_closed_form(5, 9, 6)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 60), st.integers(2, 60), st.integers(1, 60))
    def test_closed_form_equals_brute_force(self, H, W, T):
        if T > min(H, W):
            T = min(H, W)
        sched = unit_shrink_shapes(H, W, T)
        exact = Fraction(T * H * W, pixel_total(sched))
        assert unit_shrink_speedup_closed_form(H, W, T) == pytest.approx(
            float(exact), rel=1e-9
        )

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 40), st.integers(2, 30))
    def test_speedup_times_alpha_is_one(self, H, W, T):
        s = equally_spaced_shapes(H, W, T)
        total = pixel_total(s)
        assert Fraction(total, T * H * W) * Fraction(T * H * W, total) == 1
        assert speedup(s) * normalized_mean_area(s) == pytest.approx(1.0, rel=1e-14)


class TestChurnParams:
    def test_defaults(self):
        c = ChurnParams()
        assert (c.s_churn, c.s_min, c.s_max, c.s_noise) == (1.0, 0.0, math.inf, 1.0)

    def test_gamma_capped(self):
        c = ChurnParams(s_churn=1000.0)
        assert c.gamma(1.0, 10) == pytest.approx(math.sqrt(2) - 1)

    def test_gamma_outside_window_zero(self):
        c = ChurnParams(s_churn=5.0, s_min=0.1, s_max=1.0)
        assert c.gamma(2.0, 10) == 0.0
        assert c.gamma(0.5, 10) > 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            ChurnParams(s_churn=-1.0)
        with pytest.raises(ValueError):
            ChurnParams(s_min=2.0, s_max=1.0)


class TestAuditFormat:
    def test_round_trip(self):
        shapes = equally_spaced_shapes(8, 8, 5)
        noise = karras_sigmas(0.002, 80.0, 7.0, 5)
        text = schedule_lines(shapes, noise)
        rows = parse_schedule_lines(text)
        assert len(rows) == 5
        assert rows[0] == (1, 8, 8, pytest.approx(0.002))
        assert rows[-1][0] == 5
        assert rows[-1][3] == pytest.approx(80.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            schedule_lines(equally_spaced_shapes(8, 8, 5), karras_sigmas(0.002, 80, 7, 6))

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError, match="expected"):
            parse_schedule_lines("1 2 3\n")
