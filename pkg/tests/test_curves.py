"""Tests for spline smoothing and curve evaluation."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvemon.curves import (
    Curve,
    SampledCurve,
    fit_smooth,
    load_curve_csv,
    load_curves_json,
    save_curve_csv,
    save_curves_json,
    sup_norm,
)
from curvemon.errors import (
    DegenerateNorm,
    DomainError,
    InsufficientData,
    InvalidInput,
)


class TestSampledCurve:
    def test_rejects_short_samples(self):
        with pytest.raises(InsufficientData):
            SampledCurve(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0]))

    def test_rejects_non_increasing_abscissae(self):
        with pytest.raises(InvalidInput):
            SampledCurve(np.array([0.0, 1.0, 1.0, 2.0]), np.zeros(4))

    def test_rejects_non_finite_values(self):
        with pytest.raises(InvalidInput):
            SampledCurve(np.arange(4.0), np.array([0.0, 1.0, np.nan, 2.0]))

    def test_truncated_keeps_prefix(self):
        sc = SampledCurve(np.arange(10.0), np.arange(10.0) ** 2)
        assert len(sc.truncated(4.5)) == 5


class TestFitSmooth:
    def test_linear_data_reproduced(self):
        curve = fit_smooth(SampledCurve(np.arange(5.0), np.arange(5.0)), 0.0)
        assert curve.evaluate(2.0) == pytest.approx(2.0, abs=1e-8)
        assert curve.evaluate_derivative(0.5) == pytest.approx(1.0, abs=1e-8)

    def test_sin_recovery(self):
        x = np.linspace(0.0, 2.0 * np.pi, 100)
        curve = fit_smooth(SampledCurve(x, np.sin(x)), 1e-6)
        fine = np.linspace(0.0, 2.0 * np.pi, 2000)
        assert np.max(np.abs(curve.evaluate(fine) - np.sin(fine))) < 1e-3

    def test_constant_data(self):
        curve = fit_smooth(SampledCurve(np.arange(6.0), np.full(6, 5.0)), 2.0)
        pts = np.linspace(0.0, 5.0, 17)
        assert np.allclose(curve.evaluate(pts), 5.0, atol=1e-9)
        assert np.allclose(curve.evaluate_derivative(pts), 0.0, atol=1e-9)

    def test_quadratic_is_exact(self):
        x = np.linspace(0.0, 4.0, 9)
        curve = fit_smooth(SampledCurve(x, x**2), 0.0)
        assert curve.evaluate(2.0) == pytest.approx(4.0, abs=1e-8)
        assert curve.evaluate_derivative(1.0) == pytest.approx(2.0, abs=1e-6)

    def test_identity_fit(self):
        curve = fit_smooth(SampledCurve(np.linspace(0, 1, 11), np.linspace(0, 1, 11)), 0.0)
        assert curve.evaluate(0.5) == pytest.approx(0.5, abs=1e-9)

    def test_negative_penalty_rejected(self):
        with pytest.raises(InvalidInput):
            fit_smooth(SampledCurve(np.arange(5.0), np.arange(5.0)), -1.0)

    def test_auto_penalty_smooths_noise(self):
        rng = np.random.default_rng(7)
        x = np.linspace(0.0, 2.0 * np.pi, 120)
        y = np.sin(x) + 0.05 * rng.standard_normal(x.size)
        curve = fit_smooth(SampledCurve(x, y), "auto")
        fine = np.linspace(0.0, 2.0 * np.pi, 1500)
        rmse = np.sqrt(np.mean((curve.evaluate(fine) - np.sin(fine)) ** 2))
        assert rmse < 0.035  # well under the noise standard deviation

    @given(st.floats(min_value=-50.0, max_value=50.0).filter(lambda c: abs(c) > 1e-3))
    @settings(max_examples=20, deadline=None)
    def test_scale_equivariance(self, c):
        x = np.linspace(0.0, 1.0, 20)
        y = np.sin(3.0 * x) + x
        base = fit_smooth(SampledCurve(x, y), 1e-4)
        scaled = fit_smooth(SampledCurve(x, c * y), 1e-4)
        pts = np.linspace(0.0, 1.0, 37)
        np.testing.assert_allclose(scaled.evaluate(pts), c * base.evaluate(pts),
                                   rtol=1e-8, atol=1e-10 * abs(c))

    def test_derivative_matches_finite_differences(self):
        x = np.linspace(0.0, 3.0, 80)
        curve = fit_smooth(SampledCurve(x, np.exp(-x) * np.sin(4 * x)), 1e-7)
        pts = np.linspace(0.3, 2.7, 25)
        eps = 1e-5
        fd = (curve.evaluate(pts + eps) - curve.evaluate(pts - eps)) / (2 * eps)
        exact = curve.evaluate_derivative(pts)
        scale = np.maximum(np.abs(exact), 1e-3)
        assert np.max(np.abs(fd - exact) / scale) < 1e-4

    def test_roughness_decreases_with_penalty(self):
        rng = np.random.default_rng(3)
        x = np.linspace(0.0, 1.0, 60)
        y = np.sin(8 * x) + 0.2 * rng.standard_normal(x.size)

        def roughness(curve):
            pts = np.linspace(0.0, 1.0, 2000)
            d2 = curve._f.derivative(2)(pts)
            return np.trapezoid(d2**2, pts)

        values = [roughness(fit_smooth(SampledCurve(x, y), lam))
                  for lam in (1e-8, 1e-6, 1e-4, 1e-2, 1.0)]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(values, values[1:]))


class TestCurve:
    def test_domain_error(self):
        curve = fit_smooth(SampledCurve(np.arange(5.0), np.arange(5.0)), 0.0)
        with pytest.raises(DomainError):
            curve.evaluate(4.5)
        with pytest.raises(DomainError):
            curve.evaluate_derivative(-0.1)

    def test_restrict(self):
        curve = fit_smooth(SampledCurve(np.arange(5.0), np.arange(5.0) ** 2), 0.0)
        sub = curve.restrict(1.0, 3.0)
        assert sub.domain == (1.0, 3.0)
        assert sub.evaluate(2.0) == pytest.approx(curve.evaluate(2.0))
        with pytest.raises(DomainError):
            sub.evaluate(3.5)

    def test_serialization_roundtrip(self):
        x = np.linspace(0.0, 1.0, 15)
        curve = fit_smooth(SampledCurve(x, np.cos(5 * x)), 1e-6)
        clone = Curve.from_dict(json.loads(json.dumps(curve.to_dict())))
        pts = np.linspace(0.0, 1.0, 40)
        np.testing.assert_allclose(clone.evaluate(pts), curve.evaluate(pts), rtol=0, atol=0)

    def test_pchip_roundtrip(self):
        x = np.linspace(0.0, 1.0, 9)
        curve = Curve.from_samples(x, x**3 + 1.0, kind="pchip")
        clone = Curve.from_dict(curve.to_dict())
        pts = np.linspace(0.0, 1.0, 33)
        np.testing.assert_allclose(clone.evaluate(pts), curve.evaluate(pts), atol=1e-12)


class TestSupNorm:
    def test_sin(self):
        x = np.linspace(0.0, 2.0 * np.pi, 200)
        curve = fit_smooth(SampledCurve(x, np.sin(x)), 0.0)
        assert sup_norm(curve) == pytest.approx(1.0, abs=1e-3)

    def test_negative_constant(self):
        curve = fit_smooth(SampledCurve(np.arange(4.0), np.full(4, -4.0)), 0.0)
        assert sup_norm(curve) == pytest.approx(4.0, abs=1e-9)

    def test_attained_at_endpoint(self):
        x = np.linspace(0.0, 2.0, 10)
        curve = fit_smooth(SampledCurve(x, x), 0.0)
        assert sup_norm(curve) == pytest.approx(2.0, abs=1e-9)

    def test_zero_curve_rejected(self):
        curve = fit_smooth(SampledCurve(np.arange(4.0), np.zeros(4)), 0.0)
        with pytest.raises(DegenerateNorm):
            sup_norm(curve)


class TestFileFormats:
    def test_csv_roundtrip(self, tmp_path):
        sc = SampledCurve(np.linspace(0, 1, 7), np.sin(np.linspace(0, 1, 7)))
        path = tmp_path / "curve.csv"
        save_curve_csv(path, sc)
        back = load_curve_csv(path)
        np.testing.assert_array_equal(back.abscissae, sc.abscissae)
        np.testing.assert_array_equal(back.values, sc.values)

    def test_json_batch_roundtrip(self, tmp_path):
        curves = [
            ("a", SampledCurve(np.arange(5.0), np.arange(5.0) ** 2)),
            ("b", SampledCurve(np.arange(4.0), -np.arange(4.0))),
        ]
        path = tmp_path / "batch.json"
        save_curves_json(path, curves)
        back = load_curves_json(path)
        assert [cid for cid, _ in back] == ["a", "b"]
        np.testing.assert_array_equal(back[0][1].values, curves[0][1].values)
