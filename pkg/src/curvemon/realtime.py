"""Registration of partially observed curves under a band constraint.

While a curve is still being produced, its prefix up to observed time x* is
aligned against the template truncated at a candidate end point t*. The band
constraint restricts the candidate interval from the spread of the training
warpings; when the recent history of a curve's own partial registrations is
stable, the band is relaxed to a narrow window around the linear
continuation of the incumbent warping. Completed observations are extended
to the full reference domain by template-shift imputation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curves import Curve, SampledCurve, sup_norm
from .errors import (
    BandInfeasible,
    InfeasibleGrid,
    InsufficientData,
    InvalidInput,
    NoFeasiblePath,
)
from .registration import (
    Alignment,
    RegistrationParams,
    build_grid,
    dp_align,
    oeb_fdtw,
)


def read_stream(lines) -> dict[str, SampledCurve]:
    """Accumulate newline-delimited JSON events {curve_id, x, y} into one
    sampled curve per id. Accepts an iterable of lines or an open file."""
    points: dict[str, list] = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        event = json.loads(line)
        points.setdefault(str(event["curve_id"]), []).append(
            (float(event["x"]), float(event["y"])))
    out = {}
    for cid, pts in points.items():
        pts.sort()
        xs, ys = zip(*pts)
        out[cid] = SampledCurve(np.asarray(xs), np.asarray(ys))
    return out


def _inverse_on_grid(alignment: Alignment, x_grid: np.ndarray,
                     template_domain) -> np.ndarray:
    """Template time at which the warping reaches each observed time,
    linearly extended at the terminal slopes and clipped to the template
    domain."""
    knots = alignment.warping_knots
    t_k, h_k = knots[:, 0], knots[:, 1]
    t = np.interp(x_grid, h_k, t_k)
    s0 = (t_k[1] - t_k[0]) / (h_k[1] - h_k[0])
    s1 = (t_k[-1] - t_k[-2]) / (h_k[-1] - h_k[-2])
    before = x_grid < h_k[0]
    after = x_grid > h_k[-1]
    t[before] = t_k[0] - s0 * (h_k[0] - x_grid[before])
    t[after] = t_k[-1] + s1 * (x_grid[after] - h_k[-1])
    return np.clip(t, template_domain[0], template_domain[1])


@dataclass
class Band:
    """Pointwise envelope of admissible warping end points in template time."""

    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    b_level: float
    template_domain: tuple[float, float]

    def __post_init__(self):
        if np.any(self.lower > self.upper + 1e-12):
            raise InvalidInput("band lower envelope exceeds the upper one")

    def at(self, x: float) -> tuple[float, float]:
        lo = float(np.interp(x, self.grid, self.lower))
        hi = float(np.interp(x, self.grid, self.upper))
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "b_level": self.b_level,
            "template_domain": list(self.template_domain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Band":
        return cls(np.asarray(d["grid"]), np.asarray(d["lower"]),
                   np.asarray(d["upper"]), float(d["b_level"]),
                   tuple(d["template_domain"]))


def fit_band(warpings: list[Alignment], b: float, monitoring_grid,
             template_domain) -> Band:
    """Pointwise b/2 and 1-b/2 quantile envelope of the training warping
    inverses, made monotone by a running maximum."""
    if len(warpings) < 10:
        raise InsufficientData(f"need at least 10 warpings, got {len(warpings)}")
    if not 0 < b <= 1:
        raise InvalidInput("quantile level b must be in (0, 1]")
    x_grid = np.asarray(monitoring_grid, dtype=float)
    inverses = np.stack([_inverse_on_grid(w, x_grid, template_domain)
                         for w in warpings])
    lower = np.quantile(inverses, b / 2, axis=0)
    upper = np.quantile(inverses, 1 - b / 2, axis=0)
    lower = np.maximum.accumulate(lower)
    upper = np.maximum.accumulate(upper)
    upper = np.maximum(upper, lower)
    return Band(x_grid, lower, upper, float(b), tuple(template_domain))


@dataclass(frozen=True)
class RelaxationParams:
    """Adaptive band settings; gaps scale with the domain lengths."""

    delta_window: float = 0.1    # stability window as a fraction of |D_m|
    delta_value: float = 0.03    # endpoint-value gap, fraction of |D_m|
    delta_slope: float = 0.05    # relative endpoint-slope gap
    delta_center: float = 0.04   # relaxed half-width, fraction of |D_Y|
    slope_neighborhood: float = 0.05  # trailing fraction for the median slope


@dataclass
class RealtimeState:
    """Per-curve registration history: (x*, t*, terminal slope) triples plus
    the pairwise stability flags that drive the adaptive band."""

    monitor_span: float
    history: list = field(default_factory=list)
    stable: list = field(default_factory=list)

    def observe(self, x_star: float, t_star: float, slope: float,
                relax: RelaxationParams) -> None:
        if slope <= 0:
            raise InvalidInput("terminal slope must be positive")
        if self.history:
            x0, t0, m0 = self.history[-1]
            if x_star <= x0:
                raise InvalidInput("observed times must be strictly increasing")
            dx = x_star - x0
            value_gap = abs(m0 * (t_star - t0) - dx)
            slope_gap = abs(slope - m0) / abs(m0)
            self.stable.append(
                value_gap <= relax.delta_value * self.monitor_span
                and slope_gap <= relax.delta_slope)
        self.history.append((float(x_star), float(t_star), float(slope)))


def adaptive_band(state: RealtimeState, base_band: Band, x: float,
                  relax: RelaxationParams) -> tuple[float, float]:
    """Band interval at x: the relaxed window around the linear continuation
    of the incumbent warping when the recent history is stable, the base
    band otherwise. A single unstable step inside the trailing window
    reverts to the base band."""
    lo, hi = base_band.at(x)
    if len(state.history) < 2:
        return lo, hi
    span = state.monitor_span
    window = relax.delta_window * span
    eps = 1e-9 * span
    recent = [i for i in range(1, len(state.history))
              if x - window - eps <= state.history[i][0] <= x + eps]
    if not recent:
        return lo, hi
    reaches_back = state.history[recent[0] - 1][0] <= x - window + eps
    if not reaches_back or not all(state.stable[i - 1] for i in recent):
        return lo, hi
    x_last, t_last, m_last = state.history[-1]
    center = t_last + (x - x_last) / m_last
    half = relax.delta_center * (base_band.template_domain[1]
                                 - base_band.template_domain[0])
    a_y, b_y = base_band.template_domain
    return max(a_y, center - half), min(b_y, center + half)


def registered_curve(obs: Curve, alignment: Alignment, n_grid: int = 201) -> Curve:
    """The observation composed with the warping, as a curve in template time."""
    a_i, b_i = alignment.warping_domain
    h = alignment.warping_curve()
    t = np.linspace(a_i, b_i, n_grid)
    values = obs.evaluate(np.clip(h.evaluate(t), *obs.domain))
    return Curve.from_samples(t, values)


def _sub_params(params: RegistrationParams, a_y: float, b_y: float,
                t_cand: float, **overrides) -> RegistrationParams:
    fields = dict(
        lam=params.lam, s_min=params.s_min, s_max=params.s_max,
        n_t=max(4, int(round(params.n_t * (t_cand - a_y) / (b_y - a_y)))),
        m_x=params.m_x, refinement_rounds=params.refinement_rounds,
        alpha_grid=params.alpha_grid, slope_target=params.slope_target)
    fields.update(overrides)
    return RegistrationParams(**fields)


def register_partial(template: Curve, partial_obs: Curve, band: Band,
                     state: RealtimeState, params: RegistrationParams,
                     relax: RelaxationParams = RelaxationParams(),
                     start_slack=None, shortlist: int = 2) -> tuple[Alignment, float]:
    """Align a partial observation against the truncated template.

    The truncation point t* ranges over the template-grid points inside the
    band interval at x* (plus the interval endpoints); each candidate
    alignment is closed-end, pinning the warping to x* at t*. Candidates are
    first scored with a single coarse-grid pass at the middle amplitude
    weight; only the best few get the full refined multi-weight solve. When
    the band interval reaches the template end, a fully open-end alignment
    competes as well.
    """
    a_y, b_y = template.domain
    x_star = partial_obs.domain[1]
    lo, hi = adaptive_band(state, band, x_star, relax)
    if lo > hi:
        raise BandInfeasible(f"empty band interval at x*={x_star:g}")
    stage_grid = np.linspace(a_y, b_y, params.n_t + 1)
    inside = stage_grid[(stage_grid > lo) & (stage_grid < hi)]
    candidates = np.unique(np.concatenate([[lo], inside, [hi]]))
    min_len = 4 * (b_y - a_y) / params.n_t
    candidates = candidates[candidates - a_y >= min_len]
    if candidates.size == 0:
        raise BandInfeasible(
            f"band interval [{lo:g}, {hi:g}] leaves no usable template prefix")

    if start_slack is None:
        start_slack = (0.1 * (b_y - a_y),
                       0.1 * (partial_obs.domain[1] - partial_obs.domain[0]))

    obs_norm = sup_norm(partial_obs)
    obs_dnorm = sup_norm(partial_obs.derivative_curve())

    def coarse_score(t_cand: float) -> float:
        # single base-grid pass per amplitude weight; the weight must stay in
        # the scoring because different weights prefer different end points
        trunc = template.restrict(a_y, t_cand)
        sub = _sub_params(params, a_y, b_y, t_cand)
        try:
            grid = build_grid(trunc.domain, partial_obs.domain, sub,
                              start_slack, (0.0, 0.0))
        except InfeasibleGrid:
            return np.inf
        norms = (sup_norm(trunc), sup_norm(trunc.derivative_curve()),
                 obs_norm, obs_dnorm)
        score = np.inf
        for alpha in params.alpha_grid:
            try:
                aligned = dp_align(trunc, partial_obs, grid, sub, alpha,
                                   _norm_cache=norms)
            except NoFeasiblePath:
                continue
            score = min(score, aligned.objective)
        return score

    def full_solve(t_cand: float) -> Alignment | None:
        sub = _sub_params(params, a_y, b_y, t_cand)
        try:
            return oeb_fdtw(template.restrict(a_y, t_cand), partial_obs, sub,
                            start_slack, (0.0, 0.0))
        except (NoFeasiblePath, InfeasibleGrid):
            return None

    if candidates.size > shortlist:
        scored = sorted((coarse_score(t), t) for t in candidates)
        shortlisted = [t for s, t in scored[:shortlist] if np.isfinite(s)]
    else:
        shortlisted = list(candidates)

    best = None
    best_t = None
    for t_cand in shortlisted:
        aligned = full_solve(t_cand)
        if aligned is not None and (best is None
                                    or aligned.objective < best.objective):
            best, best_t = aligned, float(aligned.warping_domain[1])
    grid_step = (b_y - a_y) / params.n_t
    if hi >= b_y - grid_step * 0.5:
        # open-end alignments are admissible once the band reaches the
        # template boundary
        try:
            aligned = oeb_fdtw(template, partial_obs, params, start_slack, None)
            if best is None or aligned.objective < best.objective:
                best, best_t = aligned, float(aligned.warping_domain[1])
        except (NoFeasiblePath, InfeasibleGrid):
            pass
    if best is None:
        raise NoFeasiblePath(f"no candidate end point is alignable at x*={x_star:g}")
    return best, best_t


@dataclass
class CompletedPair:
    """Registered curve and warping extended to the full reference domain."""

    registered: Curve
    warping: Curve

    def truncate(self, t: float) -> "CompletedPair":
        return CompletedPair(
            self.registered.restrict(self.registered.domain[0], t),
            self.warping.restrict(self.warping.domain[0], t))


def impute_complete(alignment: Alignment, registered: Curve, template: Curve,
                    obs_boundaries, n_grid: int = 201) -> CompletedPair:
    """Extend a registered pair to the template domain.

    The registered curve continues as the template shifted to match the
    boundary values. The warping continues affinely at the mean slope
    c = (observed span) / (alignment span), which keeps it strictly
    increasing and continuous at both stitch points.
    """
    a_y, b_y = template.domain
    a_i, b_i = alignment.warping_domain
    if b_i <= a_i:
        raise InvalidInput("alignment domain is empty")
    a_x, b_x = map(float, obs_boundaries)
    c = (b_x - a_x) / (b_i - a_i)
    if c <= 0:
        raise InvalidInput("observation boundaries must span a positive range")

    h = alignment.warping_curve()
    h_left = float(h.evaluate(a_i))
    h_right = float(h.evaluate(b_i))
    x_left = float(registered.evaluate(a_i))
    x_right = float(registered.evaluate(b_i))
    y_left = float(template.evaluate(a_i))
    y_right = float(template.evaluate(b_i))

    t = np.union1d(np.linspace(a_y, b_y, n_grid), [a_i, b_i])
    before = t < a_i
    inside = (t >= a_i) & (t <= b_i)
    after = t > b_i

    reg_vals = np.empty_like(t)
    reg_vals[before] = np.asarray(template.evaluate(t[before])) + x_left - y_left
    reg_vals[inside] = registered.evaluate(t[inside])
    reg_vals[after] = np.asarray(template.evaluate(t[after])) + x_right - y_right

    warp_vals = np.empty_like(t)
    warp_vals[before] = h_left + c * (t[before] - a_i)
    warp_vals[inside] = h.evaluate(t[inside])
    warp_vals[after] = h_right + c * (t[after] - b_i)

    if t[0] == t[-1]:
        raise InvalidInput("reference domain is degenerate")
    return CompletedPair(
        registered=Curve.from_samples(t, reg_vals),
        warping=Curve.from_samples(t, warp_vals, kind="pchip"),
    )
