"""Length estimation, the log-linear DWT fit, and cargo valuation."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from darksts.capacity import (
    FORM_LOG_LINEAR,
    LengthDwtModel,
    cargo_value,
    estimate_dwt,
    estimate_length,
    fit_loglinear,
)
from darksts.errors import ConfigInvalid, DegenerateInput, OutOfRange


def power_law_samples(lengths, a=1.0, b=2.5):
    return [(L, math.exp(a + b * math.log(L))) for L in lengths]


LENGTHS = [52.0, 75.0, 110.0, 140.0, 183.0, 249.0, 333.0]


class TestEstimateLength:
    def test_three_four_five(self):
        assert estimate_length((40.0, 30.0), 3.0) == 150.0

    def test_axis_aligned_ship(self):
        assert estimate_length((80.0, 1.0), 3.0) == pytest.approx(240.0,
                                                                  abs=0.1)

    def test_four_tuple_bbox(self):
        assert estimate_length((120.0, 80.0, 40.0, 30.0), 3.0) == 150.0

    def test_250m_vessel_survives_pixel_quantization(self):
        # 250 m hull at 36.87 degrees off axis, box snapped to whole pixels
        w, h = round(250.0 * 0.8 / 3.0), round(250.0 * 0.6 / 3.0)
        assert abs(estimate_length((w, h), 3.0) - 250.0) <= 3.0

    def test_resolution_scaling(self):
        base = estimate_length((40.0, 30.0), 1.0)
        assert estimate_length((40.0, 30.0), 2.5) == pytest.approx(2.5 * base)

    @given(st.floats(1.0, 500.0), st.floats(1.0, 500.0),
           st.floats(0.1, 50.0))
    def test_monotone_in_box_dimensions(self, w, h, res):
        base = estimate_length((w, h), res)
        assert estimate_length((w + 1.0, h), res) > base
        assert estimate_length((w, h + 1.0), res) > base

    @pytest.mark.parametrize("bbox,res", [
        ((0.0, 30.0), 3.0), ((40.0, -1.0), 3.0), ((40.0, 30.0), 0.0),
        ((1.0, 2.0, 3.0), 3.0),
    ])
    def test_rejects_bad_inputs(self, bbox, res):
        with pytest.raises(OutOfRange):
            estimate_length(bbox, res)


class TestFit:
    def test_noiseless_recovery(self):
        model = fit_loglinear(power_law_samples(LENGTHS))
        assert model.a == pytest.approx(1.0, abs=1e-9)
        assert model.b == pytest.approx(2.5, abs=1e-9)
        assert model.r_squared == pytest.approx(1.0, abs=1e-9)
        assert model.n == len(LENGTHS)

    def test_noisy_recovery_matches_polyfit(self):
        rng = np.random.default_rng(8)
        lengths = rng.uniform(50.0, 400.0, 500)
        log_dwt = 1.0 + 2.5 * np.log(lengths) + rng.normal(0.0, 0.1, 500)
        samples = list(zip(lengths, np.exp(log_dwt)))
        model = fit_loglinear(samples)
        assert abs(model.b - 2.5) < 0.05
        slope, intercept = np.polyfit(np.log(lengths), log_dwt, 1)
        assert model.b == pytest.approx(slope, abs=1e-9)
        assert model.a == pytest.approx(intercept, abs=1e-9)
        assert 0.9 < model.r_squared < 1.0

    def test_two_length_groups_hit_group_means(self):
        samples = [(100.0, math.exp(2.0)), (100.0, math.exp(4.0)),
                   (200.0, math.exp(5.0))]
        model = fit_loglinear(samples)
        assert model.a + model.b * math.log(100.0) == pytest.approx(3.0)
        assert model.a + model.b * math.log(200.0) == pytest.approx(5.0)

    def test_order_invariance(self):
        samples = power_law_samples(LENGTHS)
        forward = fit_loglinear(samples)
        backward = fit_loglinear(samples[::-1])
        assert forward.a == pytest.approx(backward.a, abs=1e-9)
        assert forward.b == pytest.approx(backward.b, abs=1e-9)

    def test_length_rescale_shifts_intercept_only(self):
        k = 3.7
        base = fit_loglinear(power_law_samples(LENGTHS))
        scaled = fit_loglinear([(L * k, d) for L, d in
                                power_law_samples(LENGTHS)])
        assert scaled.b == pytest.approx(base.b, abs=1e-9)
        assert scaled.a == pytest.approx(base.a - base.b * math.log(k),
                                         abs=1e-9)

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateInput):
            fit_loglinear([(100.0, 5000.0), (100.0, 6000.0),
                           (100.0, 7000.0)])
        with pytest.raises(DegenerateInput):
            fit_loglinear([(100.0, 5000.0), (200.0, 9000.0)])
        with pytest.raises(OutOfRange):
            fit_loglinear([(100.0, 5000.0), (-1.0, 9000.0),
                           (200.0, 1.0)])

    def test_ln_linear_form(self):
        samples = [(L, math.exp(0.5 + 0.01 * L)) for L in LENGTHS]
        model = fit_loglinear(samples, form=FORM_LOG_LINEAR)
        assert model.a == pytest.approx(0.5, abs=1e-9)
        assert model.b == pytest.approx(0.01, abs=1e-9)
        assert estimate_dwt(120.0, model) == pytest.approx(
            math.exp(0.5 + 1.2), rel=1e-9)

    def test_unknown_form(self):
        with pytest.raises(ConfigInvalid):
            fit_loglinear(power_law_samples(LENGTHS), form="quadratic")

    def test_model_record(self):
        model = fit_loglinear(power_law_samples(LENGTHS))
        record = model.as_record()
        assert set(record) == {"a", "b", "r_squared", "n", "form"}
        assert record["n"] == len(LENGTHS)


class TestModelValidation:
    def test_rejects_small_n(self):
        with pytest.raises(ConfigInvalid):
            LengthDwtModel(a=1.0, b=2.5, r_squared=0.9, n=2)

    def test_rejects_bad_r_squared(self):
        with pytest.raises(ConfigInvalid):
            LengthDwtModel(a=1.0, b=2.5, r_squared=1.5, n=10)

    def test_rejects_nonfinite_slope(self):
        with pytest.raises(ConfigInvalid):
            LengthDwtModel(a=1.0, b=float("nan"), r_squared=0.5, n=10)


class TestEstimateDwt:
    def test_power_law_arithmetic(self):
        model = LengthDwtModel(a=1.0, b=2.5, r_squared=1.0, n=10)
        # e^1 * 100^2.5 = e * 1e5
        assert estimate_dwt(100.0, model) == pytest.approx(
            math.e * 1e5, rel=1e-12)

    def test_zero_slope_is_constant(self):
        model = LengthDwtModel(a=7.0, b=0.0, r_squared=0.0, n=10)
        assert estimate_dwt(10.0, model) == estimate_dwt(400.0, model)
        assert estimate_dwt(10.0, model) == pytest.approx(math.exp(7.0))

    def test_round_trip_through_fit(self):
        samples = power_law_samples(LENGTHS)
        model = fit_loglinear(samples)
        for length, dwt in samples:
            assert estimate_dwt(length, model) == pytest.approx(dwt,
                                                                rel=1e-6)

    def test_rejects_nonpositive_length(self):
        model = LengthDwtModel(a=1.0, b=2.5, r_squared=1.0, n=10)
        with pytest.raises(OutOfRange):
            estimate_dwt(0.0, model)


class TestCargoValue:
    def test_capped_price(self):
        assert cargo_value(827_996, 60) == 49_679_760

    def test_cap_uplift(self):
        assert cargo_value(827_996, 78 - 60) == 14_903_928

    def test_peak_spread(self):
        assert cargo_value(827_996, 94 - 60) == 28_151_864

    def test_exact_integer_arithmetic(self):
        assert isinstance(cargo_value(827_996, 60), int)

    @given(st.integers(0, 10**7), st.integers(0, 200))
    def test_bilinear(self, barrels, price):
        assert cargo_value(2 * barrels, price) == 2 * cargo_value(barrels,
                                                                  price)
        assert cargo_value(barrels, 3 * price) == 3 * cargo_value(barrels,
                                                                  price)

    def test_rejects_negative(self):
        with pytest.raises(OutOfRange):
            cargo_value(-1, 60)
        with pytest.raises(OutOfRange):
            cargo_value(10, -0.5)
