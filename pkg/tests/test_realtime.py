"""Tests for band fitting, adaptive relaxation, partial registration, and
missing-part imputation."""

import numpy as np
import pytest

from curvemon.curves import SampledCurve, fit_smooth
from curvemon.errors import BandInfeasible, InsufficientData, InvalidInput
from curvemon.realtime import (
    Band,
    RealtimeState,
    RelaxationParams,
    adaptive_band,
    fit_band,
    impute_complete,
    register_partial,
    registered_curve,
)
from curvemon.registration import Alignment, RegistrationParams, oeb_fdtw


def affine_alignment(slope, domain=(0.0, 1.0)) -> Alignment:
    t = np.linspace(domain[0], domain[1], 21)
    knots = np.column_stack([t, slope * t])
    return Alignment(domain, knots, 0.5, 0.0, slope)


@pytest.fixture(scope="module")
def template():
    x = np.linspace(0.0, 1.0, 101)
    return fit_smooth(SampledCurve(x, np.sin(2 * np.pi * x) + 2.0), 0.0)


@pytest.fixture(scope="module")
def rt_params():
    return RegistrationParams(lam=0.0, s_min=0.2, s_max=4.0, n_t=40, m_x=15,
                              refinement_rounds=1, alpha_grid=(0.0, 0.5, 1.0))


class TestFitBand:
    def test_identical_warps_collapse(self):
        warps = [affine_alignment(1.25) for _ in range(12)]
        grid = np.linspace(0.1, 1.0, 15)
        band = fit_band(warps, 0.05, grid, (0.0, 1.0))
        np.testing.assert_allclose(band.lower, band.upper)
        np.testing.assert_allclose(band.lower, np.clip(grid / 1.25, 0, 1), atol=1e-12)

    def test_b_one_gives_pointwise_median(self):
        slopes = np.linspace(0.8, 1.3, 11)
        warps = [affine_alignment(s) for s in slopes]
        grid = np.linspace(0.1, 0.8, 9)
        band = fit_band(warps, 1.0, grid, (0.0, 1.0))
        median = np.median(np.stack([grid / s for s in slopes]), axis=0)
        np.testing.assert_allclose(band.lower, median, atol=1e-12)
        np.testing.assert_allclose(band.upper, median, atol=1e-12)

    def test_band_covers_fresh_inverses(self):
        # nominal coverage is 1 - b = 0.99; with only 100 training warps the
        # extreme empirical quantiles undercover by O(1/n), so assert the
        # Monte Carlo level for each sample size
        rng = np.random.default_rng(42)
        grid = np.linspace(0.1, 0.8, 20)
        for n_train, level in ((100, 0.94), (400, 0.97)):
            warps = [affine_alignment(s) for s in rng.uniform(0.8, 1.25, n_train)]
            band = fit_band(warps, 0.01, grid, (0.0, 1.0))
            fresh = rng.uniform(0.8, 1.25, 1000)
            inv = np.stack([grid / s for s in fresh])
            inside = (inv >= band.lower - 1e-12) & (inv <= band.upper + 1e-12)
            assert inside.mean() >= level

    def test_envelope_is_monotone(self):
        rng = np.random.default_rng(3)
        warps = [affine_alignment(s) for s in rng.uniform(0.7, 1.4, 30)]
        grid = np.linspace(0.05, 1.0, 40)
        band = fit_band(warps, 0.1, grid, (0.0, 1.0))
        assert np.all(np.diff(band.lower) >= -1e-12)
        assert np.all(np.diff(band.upper) >= -1e-12)

    def test_too_few_warpings(self):
        with pytest.raises(InsufficientData):
            fit_band([affine_alignment(1.0)] * 5, 0.1, np.linspace(0, 1, 5), (0, 1))

    def test_invalid_level(self):
        warps = [affine_alignment(1.0)] * 12
        with pytest.raises(InvalidInput):
            fit_band(warps, 0.0, np.linspace(0, 1, 5), (0, 1))

    def test_serialization_roundtrip(self):
        warps = [affine_alignment(s) for s in np.linspace(0.9, 1.1, 12)]
        band = fit_band(warps, 0.1, np.linspace(0.1, 0.9, 7), (0.0, 1.0))
        clone = Band.from_dict(band.to_dict())
        np.testing.assert_array_equal(clone.lower, band.lower)
        assert clone.b_level == band.b_level


def linear_state(span, n_steps, slope=1.0, until=1.0, noise=None):
    state = RealtimeState(monitor_span=span)
    relax = RelaxationParams()
    xs = np.linspace(until / n_steps, until, n_steps)
    rng = np.random.default_rng(0)
    for x in xs:
        t = x / slope
        m = slope
        if noise is not None:
            t += noise * rng.standard_normal()
            m *= 1 + noise * 10 * rng.standard_normal()
        state.observe(x, t, max(m, 1e-6), relax)
    return state


class TestAdaptiveBand:
    def setup_method(self):
        grid = np.linspace(0.05, 1.0, 20)
        self.band = Band(grid, np.clip(grid - 0.2, 0, 1), np.clip(grid + 0.2, 0, 1),
                         0.01, (0.0, 1.0))

    def test_linear_history_relaxes_to_continuation(self):
        state = linear_state(1.0, 25, slope=1.25, until=0.8)
        relax = RelaxationParams()
        lo, hi = adaptive_band(state, self.band, 0.832, relax)
        center = 0.8 / 1.25 + 0.032 / 1.25
        assert lo == pytest.approx(center - 0.04, abs=1e-9)
        assert hi == pytest.approx(center + 0.04, abs=1e-9)

    def test_zero_tolerances_never_relax(self):
        state = RealtimeState(monitor_span=1.0)
        relax = RelaxationParams(delta_value=0.0, delta_slope=0.0)
        rng = np.random.default_rng(1)
        for x in np.linspace(0.05, 0.8, 20):
            state.observe(x, x + 0.001 * rng.standard_normal(),
                          1 + 0.01 * rng.standard_normal(), relax)
        lo, hi = adaptive_band(state, self.band, 0.84, relax)
        assert (lo, hi) == self.band.at(0.84)

    def test_short_history_uses_base_band(self):
        # two points at the start of the run cannot span the stability window
        # when the query point is far ahead
        state = linear_state(1.0, 2, until=0.08)
        lo, hi = adaptive_band(state, self.band, 0.3, RelaxationParams())
        assert (lo, hi) == self.band.at(0.3)

    def test_violation_reverts_to_base(self):
        relax = RelaxationParams()
        state = linear_state(1.0, 25, until=0.8)
        state.observe(0.832, 0.6, 1.0, relax)  # jump: unstable step
        lo, hi = adaptive_band(state, self.band, 0.864, relax)
        assert (lo, hi) == self.band.at(0.864)

    def test_relaxed_width_bounded(self):
        state = linear_state(1.0, 30, until=0.9)
        relax = RelaxationParams()
        lo, hi = adaptive_band(state, self.band, 0.93, relax)
        assert hi - lo <= 2 * relax.delta_center * 1.0 + 1e-12

    def test_defaults_match_protocol(self):
        relax = RelaxationParams()
        assert (relax.delta_window, relax.delta_value,
                relax.delta_slope, relax.delta_center) == (0.1, 0.03, 0.05, 0.04)


def wide_band(template_domain=(0.0, 1.0), width=0.15):
    grid = np.linspace(0.05, 1.0, 25)
    return Band(grid, np.clip(grid - width, *template_domain),
                np.clip(grid + width, *template_domain), 0.01, template_domain)


class TestRegisterPartial:
    def test_truncated_template_recovers_endpoint(self, template, rt_params):
        t0 = 0.62
        xs = np.linspace(0.0, t0, 80)
        partial = fit_smooth(SampledCurve(xs, template.evaluate(xs)), 0.0)
        state = RealtimeState(monitor_span=1.0)
        aligned, t_star = register_partial(template, partial, wide_band(), state,
                                           rt_params)
        assert t_star == pytest.approx(t0, abs=1.5 / rt_params.n_t)
        assert aligned.objective < 1e-3
        # closed end: the warping reaches exactly the observed boundary
        assert aligned.warping_knots[-1, 1] == pytest.approx(t0, abs=1e-9)

    def test_known_quadratic_warp_midpoint(self, template, rt_params):
        b = 0.3

        def q(t):
            return t + b * t * (t - 1)

        t_fine = np.linspace(0.0, 1.0, 4001)
        x_star = q(0.5)
        xs = np.linspace(0.0, x_star, 120)
        q_inv = np.interp(xs, q(t_fine), t_fine)
        partial = fit_smooth(SampledCurve(xs, template.evaluate(q_inv)), 0.0)
        state = RealtimeState(monitor_span=1.0)
        aligned, t_star = register_partial(template, partial, wide_band(), state,
                                           rt_params)
        assert t_star == pytest.approx(0.5, abs=0.03)

    def test_degenerate_band_is_singleton_search(self, template, rt_params):
        t0 = 0.6
        xs = np.linspace(0.0, t0, 70)
        partial = fit_smooth(SampledCurve(xs, template.evaluate(xs)), 0.0)
        grid = np.linspace(0.05, 1.0, 25)
        band = Band(grid, np.full_like(grid, t0), np.full_like(grid, t0), 0.01,
                    (0.0, 1.0))
        state = RealtimeState(monitor_span=1.0)
        aligned, t_star = register_partial(template, partial, band, state, rt_params)
        assert t_star == t0
        assert aligned.warping_knots[-1, 1] == pytest.approx(t0, abs=1e-9)

    def test_band_infeasible_when_prefix_unusable(self, template, rt_params):
        xs = np.linspace(0.0, 0.3, 40)
        partial = fit_smooth(SampledCurve(xs, template.evaluate(xs)), 0.0)
        grid = np.linspace(0.05, 1.0, 25)
        tiny = 1e-4
        band = Band(grid, np.full_like(grid, tiny), np.full_like(grid, 2 * tiny),
                    0.01, (0.0, 1.0))
        state = RealtimeState(monitor_span=1.0)
        with pytest.raises(BandInfeasible):
            register_partial(template, partial, band, state, rt_params)

    def test_monotone_progress(self, template, rt_params):
        xs_full = np.linspace(0.0, 1.0, 141)
        obs = fit_smooth(SampledCurve(xs_full, template.evaluate(xs_full**1.08)), 0.0)
        state = RealtimeState(monitor_span=1.0)
        t_stars = []
        relax = RelaxationParams()
        for x_star in np.linspace(0.3, 0.95, 8):
            partial = obs.restrict(0.0, x_star)
            aligned, t_star = register_partial(template, partial, wide_band(),
                                               state, rt_params)
            state.observe(x_star, t_star, aligned.terminal_slope(), relax)
            t_stars.append(t_star)
        assert all(b >= a - 1e-9 for a, b in zip(t_stars, t_stars[1:]))

    def test_full_observation_matches_offline(self, template, rt_params):
        xs_full = np.linspace(0.0, 1.0, 141)
        obs = fit_smooth(SampledCurve(xs_full, template.evaluate(xs_full**1.05)), 0.0)
        state = RealtimeState(monitor_span=1.0)
        aligned, _ = register_partial(template, obs, wide_band(), state, rt_params)
        offline = oeb_fdtw(template, obs, rt_params)
        assert aligned.objective <= offline.objective * 1.05 + 1e-9


class TestImputeComplete:
    def make_alignment(self, template, rt_params, lo=0.12, hi=0.8):
        xs = np.linspace(lo, hi, 120)
        obs = fit_smooth(SampledCurve(xs, template.evaluate(xs)), 0.0)
        aligned = oeb_fdtw(template, obs, rt_params, (0.2, 0.2), (0.25, 0.25))
        return obs, aligned

    def test_full_coverage_passthrough(self, template, rt_params):
        xs = np.linspace(0.0, 1.0, 141)
        obs = fit_smooth(SampledCurve(xs, template.evaluate(xs)), 0.0)
        aligned = oeb_fdtw(template, obs, rt_params, (0, 0), (0, 0))
        reg_curve = registered_curve(obs, aligned)
        pair = impute_complete(aligned, reg_curve, template, obs.domain)
        pts = np.linspace(0.0, 1.0, 200)
        np.testing.assert_allclose(pair.registered.evaluate(pts),
                                   reg_curve.evaluate(pts), atol=1e-8)

    def test_continuity_at_stitches(self, template, rt_params):
        obs, aligned = self.make_alignment(template, rt_params)
        reg_curve = registered_curve(obs, aligned)
        pair = impute_complete(aligned, reg_curve, template, obs.domain)
        a_i, b_i = aligned.warping_domain
        eps = 1e-7
        for curve in (pair.registered, pair.warping):
            for point in (a_i, b_i):
                left = curve.evaluate(max(point - eps, 0.0))
                right = curve.evaluate(min(point + eps, 1.0))
                assert abs(left - right) < 1e-4  # continuous across the stitch
        assert abs(pair.registered.evaluate(a_i) - reg_curve.evaluate(a_i)) < 1e-8
        assert abs(pair.registered.evaluate(b_i) - reg_curve.evaluate(b_i)) < 1e-8

    def test_completed_warping_strictly_increasing(self, template, rt_params):
        obs, aligned = self.make_alignment(template, rt_params)
        reg_curve = registered_curve(obs, aligned)
        pair = impute_complete(aligned, reg_curve, template, obs.domain)
        scan = np.linspace(0.0, 1.0, 1000)
        values = pair.warping.evaluate(scan)
        assert np.all(np.diff(values) > 0)

    def test_truncate(self, template, rt_params):
        obs, aligned = self.make_alignment(template, rt_params)
        pair = impute_complete(aligned, registered_curve(obs, aligned), template,
                               obs.domain)
        short = pair.truncate(0.5)
        assert short.registered.domain == (0.0, 0.5)
        assert short.warping.domain == (0.0, 0.5)

    def test_rejects_empty_domain(self, template):
        knots = np.column_stack([np.linspace(0.3, 0.3, 2), [0.2, 0.2]])
        aligned = Alignment((0.3, 0.3), knots, 0.5, 0.0, 1.0)
        with pytest.raises(InvalidInput):
            impute_complete(aligned, template, template, (0.0, 1.0))

class TestReadStream:
    def test_events_accumulate_per_curve(self):
        lines = [
            '{"curve_id": "a", "x": 0.0, "y": 1.0}',
            '{"curve_id": "b", "x": 0.0, "y": 5.0}',
            '{"curve_id": "a", "x": 0.2, "y": 1.5}',
            '',
            '{"curve_id": "a", "x": 0.1, "y": 1.2}',
            '{"curve_id": "a", "x": 0.3, "y": 1.9}',
            '{"curve_id": "b", "x": 0.1, "y": 4.0}',
            '{"curve_id": "b", "x": 0.2, "y": 3.0}',
            '{"curve_id": "b", "x": 0.3, "y": 2.0}',
        ]
        from curvemon.realtime import read_stream

        curves = read_stream(lines)
        assert set(curves) == {"a", "b"}
        np.testing.assert_allclose(curves["a"].abscissae, [0.0, 0.1, 0.2, 0.3])
        np.testing.assert_allclose(curves["a"].values, [1.0, 1.2, 1.5, 1.9])
        np.testing.assert_allclose(curves["b"].values, [5.0, 4.0, 3.0, 2.0])
