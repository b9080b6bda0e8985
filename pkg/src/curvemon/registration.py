"""Open-end/open-begin curve alignment by dynamic programming.

An observation is aligned to a template by estimating a strictly increasing
warping function on a stage grid over the template domain. Candidate warp
values at each stage are discretized between geometric feasibility bounds;
the minimum-average-cost monotone path through the resulting graph is found
by dynamic programming, run once per admissible starting stage so that the
average objective (cost per unit of covered template domain) is minimized
exactly. Bounds are then re-centered around the incumbent path and the
search repeated on the finer grid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from warnings import warn

import numpy as np

from .curves import Curve, SampledCurve, fit_smooth, sup_norm
from .errors import (
    InfeasibleGrid,
    InvalidInput,
    NoFeasiblePath,
    NoPhaseVariationWarning,
)

# examined DP transitions, for complexity assertions in tests
TRANSITION_COUNT = 0

_SLOPE_TOL_SCALE = 1e-9


@dataclass(frozen=True)
class RegistrationParams:
    """Tuning knobs of the alignment solver."""

    lam: float = 0.0
    s_min: float = 0.01
    s_max: float = 1000.0
    n_t: int = 100
    m_x: int = 50
    refinement_rounds: int = 3
    alpha_grid: tuple[float, ...] = (0.0, 0.5, 1.0)
    slope_target: float | None = None  # None: |obs domain| / |template domain|

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise InvalidInput("need s_min < s_max")
        if self.s_min <= 0:
            raise InvalidInput("s_min must be positive")
        if self.n_t < 2 or self.m_x < 2:
            raise InvalidInput("need n_t >= 2 and m_x >= 2")
        if any(a < 0 or a > 1 for a in self.alpha_grid):
            raise InvalidInput("alpha grid must lie in [0, 1]")
        if self.lam < 0:
            raise InvalidInput("lambda must be nonnegative")

    def target_for(self, template_domain, obs_domain) -> float:
        if self.slope_target is not None:
            return float(self.slope_target)
        return (obs_domain[1] - obs_domain[0]) / (template_domain[1] - template_domain[0])


@dataclass
class WarpGrid:
    """Discretization of the warping search space."""

    t_values: np.ndarray          # stage times in the template domain
    tau_values: np.ndarray        # (n_stages, m_x) candidate warp values
    lower: np.ndarray
    upper: np.ndarray
    feasible: np.ndarray          # per-stage: lower <= upper
    start_slack: tuple[float, float]   # (delta_t_start, delta_x_start)
    end_slack: tuple[float, float]     # (delta_t_end, delta_x_end)
    template_domain: tuple[float, float]
    obs_domain: tuple[float, float]

    @property
    def n_stages(self) -> int:
        return self.t_values.size

    def start_prefix(self) -> np.ndarray:
        """Per stage, how many of the lowest candidates are admissible starts.

        Paths may start at any candidate of the first stage whose value is
        within the begin mismatch slack, or at the lowest candidate of a
        later stage whose time is within the begin time slack.
        """
        dts, dxs = self.start_slack
        a_y = self.template_domain[0]
        a_x = self.obs_domain[0]
        t_tol = 1e-9 * (self.template_domain[1] - a_y)
        x_tol = 1e-9 * max(self.obs_domain[1] - a_x, 1.0)
        prefix = np.zeros(self.n_stages, dtype=np.int64)
        for j in range(self.n_stages):
            if not self.feasible[j] or self.t_values[j] > a_y + dts + t_tol:
                continue
            admissible = self.tau_values[j] <= a_x + dxs + x_tol
            if j == 0:
                prefix[j] = int(np.searchsorted(~admissible, True))
            elif admissible[0]:
                prefix[j] = 1
        return prefix

    def end_first_index(self) -> np.ndarray:
        """Per stage, the first candidate index admissible as a terminal
        (m_x when the stage is not end-admissible at all)."""
        dte, dxe = self.end_slack
        b_y = self.template_domain[1]
        b_x = self.obs_domain[1]
        t_tol = 1e-9 * (b_y - self.template_domain[0])
        x_tol = 1e-9 * max(b_x - self.obs_domain[0], 1.0)
        m = self.tau_values.shape[1]
        first = np.full(self.n_stages, m, dtype=np.int64)
        for j in range(self.n_stages):
            if not self.feasible[j] or self.t_values[j] < b_y - dte - t_tol:
                continue
            ok = self.tau_values[j] >= b_x - dxe - x_tol
            if ok.any():
                first[j] = int(np.argmax(ok))
        return first


@dataclass
class Alignment:
    """A fitted warping: knots (t_j, h(t_j)) on [a, b] within the template domain."""

    warping_domain: tuple[float, float]
    warping_knots: np.ndarray     # (n, 2) columns (t, h)
    alpha: float
    objective: float              # average cost per unit template domain
    slope_target: float
    f_average: float = np.nan     # penalty-free part of the objective

    def warping_curve(self) -> Curve:
        """Monotone interpolant through the warping knots."""
        return Curve.from_samples(self.warping_knots[:, 0], self.warping_knots[:, 1],
                                  kind="pchip")

    def truncated(self, t_end: float) -> "Alignment":
        """Alignment restricted to knots at or before t_end."""
        keep = self.warping_knots[:, 0] <= t_end + 1e-12
        knots = self.warping_knots[keep]
        if knots.shape[0] < 2:
            raise InvalidInput(f"truncation at {t_end:g} leaves no warping")
        return Alignment((float(knots[0, 0]), float(knots[-1, 0])), knots,
                         self.alpha, self.objective, self.slope_target,
                         self.f_average)

    def terminal_slope(self, fraction: float = 0.05) -> float:
        """Median knot-to-knot slope over the trailing part of the domain."""
        t, h = self.warping_knots[:, 0], self.warping_knots[:, 1]
        a, b = self.warping_domain
        cutoff = b - fraction * (b - a)
        idx = max(1, int(np.searchsorted(t, cutoff)))
        slopes = np.diff(h[idx - 1:]) / np.diff(t[idx - 1:])
        return float(np.median(slopes))

    def to_dict(self) -> dict:
        return {
            "domain": [float(v) for v in self.warping_domain],
            "knots": self.warping_knots.tolist(),
            "alpha": float(self.alpha),
            "objective": float(self.objective),
        }

    @classmethod
    def from_dict(cls, d: dict, slope_target: float = np.nan) -> "Alignment":
        knots = np.asarray(d["knots"], dtype=float)
        return cls(tuple(d["domain"]), knots, float(d["alpha"]), float(d["objective"]),
                   slope_target)


def build_grid(template_domain, obs_domain, params: RegistrationParams,
               start_slack, end_slack) -> WarpGrid:
    """Stage grid and per-stage warp-value bounds.

    Bounds combine the begin/end mismatch slacks with forward/backward
    reachability under the slope box [s_min, s_max], clipped to the
    observation domain.
    """
    a_y, b_y = map(float, template_domain)
    a_x, b_x = map(float, obs_domain)
    if not (a_y < b_y and a_x < b_x):
        raise InvalidInput("domains must be nonempty intervals")
    dts, dxs = map(float, start_slack)
    dte, dxe = map(float, end_slack)
    if min(dts, dxs, dte, dxe) < 0:
        raise InvalidInput("slacks must be nonnegative")

    t_values = np.linspace(a_y, b_y, params.n_t + 1)
    s_min, s_max = params.s_min, params.s_max
    lower = np.maximum.reduce([
        s_min * t_values + a_x - s_min * (a_y + dts),
        s_max * t_values + (b_x - dxe) - s_max * b_y,
        np.full_like(t_values, a_x),
    ])
    upper = np.minimum.reduce([
        s_max * t_values + (a_x + dxs) - s_max * a_y,
        s_min * t_values + b_x - s_min * (b_y - dte),
        np.full_like(t_values, b_x),
    ])
    lower = np.clip(lower, a_x, b_x)
    upper = np.clip(upper, a_x, b_x)
    return _grid_from_bounds(t_values, lower, upper, params.m_x,
                             (dts, dxs), (dte, dxe), (a_y, b_y), (a_x, b_x))


def _grid_from_bounds(t_values, lower, upper, m_x, start_slack, end_slack,
                      template_domain, obs_domain) -> WarpGrid:
    tol = 1e-12 * max(abs(obs_domain[0]), abs(obs_domain[1]), 1.0)
    feasible = lower <= upper + tol
    if not feasible.any():
        raise InfeasibleGrid("no stage admits any warp value under the slope box")
    frac = np.linspace(0.0, 1.0, m_x)
    tau = lower[:, None] + (upper - lower)[:, None] * frac[None, :]
    return WarpGrid(t_values, tau, lower, upper, feasible,
                    start_slack, end_slack, template_domain, obs_domain)


# -- dynamic programming engines ---------------------------------------

def _dp_engine_numpy(t, tau, feasible, yn, ydn, xn, xdn, start_prefix, end_first,
                     alpha, lam, target, s_min, s_max):
    n_stages, m = tau.shape
    a2, b2 = alpha * alpha, (1.0 - alpha) ** 2
    stol = _SLOPE_TOL_SCALE * (1.0 + abs(s_max))
    inf = np.inf
    best = (inf, -1, -1, None)  # avg, j0, j_end, parents
    for j0 in range(n_stages):
        if start_prefix[j0] == 0:
            continue
        val = np.full(m, inf)
        val[: start_prefix[j0]] = 0.0
        parent = np.full((n_stages, m), -1, dtype=np.int64)
        run = (inf, -1, -1)
        for j in range(j0, n_stages - 1):
            if not feasible[j + 1]:
                break
            dt = t[j + 1] - t[j]
            slope = (tau[j + 1][None, :] - tau[j][:, None]) / dt
            ok = (slope >= s_min - stol) & (slope <= s_max + stol)
            dd = ydn[j + 1] - slope * xdn[j + 1][None, :]
            du = slope - target
            da = yn[j + 1] - xn[j + 1]
            cost = dt * (a2 * da * da + b2 * dd * dd + lam * du * du)
            total = val[:, None] + np.where(ok, cost, inf)
            val = total.min(axis=0)
            parent[j + 1] = total.argmin(axis=0)
            if not np.isfinite(val).any():
                break
            ef = end_first[j + 1]
            if ef < m:
                tail = val[ef:]
                k_rel = int(np.argmin(tail))
                if np.isfinite(tail[k_rel]):
                    avg = tail[k_rel] / (t[j + 1] - t[j0])
                    if avg < run[0]:
                        run = (avg, j + 1, ef + k_rel)
        if run[0] < best[0]:
            best = (run[0], j0, run[1], parent.copy(), run[2])
    if best[1] < 0:
        return False, np.nan, -1, -1, None
    avg, j0, j_end, parent, k_end = best
    path = np.full(n_stages, -1, dtype=np.int64)
    k = k_end
    for j in range(j_end, j0, -1):
        path[j] = k
        k = parent[j, k]
    path[j0] = k
    return True, avg, j0, j_end, path


try:  # pragma: no cover - exercised indirectly
    if os.environ.get("CURVEMON_DISABLE_NUMBA"):
        raise ImportError
    from numba import njit

    @njit(cache=True)
    def _dp_kernel_numba(t, tau, feasible, yn, ydn, xn, xdn, start_prefix,
                         end_first, alpha, lam, target, s_min, s_max):
        n_stages, m = tau.shape
        a2 = alpha * alpha
        b2 = (1.0 - alpha) * (1.0 - alpha)
        stol = _SLOPE_TOL_SCALE * (1.0 + abs(s_max))
        inf = np.inf
        best_avg = inf
        best_j0 = -1
        best_jend = -1
        path = np.full(n_stages, -1, np.int64)
        for j0 in range(n_stages):
            if start_prefix[j0] == 0:
                continue
            val = np.full(m, inf)
            for k in range(start_prefix[j0]):
                val[k] = 0.0
            parent = np.full((n_stages, m), -1, np.int64)
            run_best = inf
            run_jend = -1
            run_kend = -1
            for j in range(j0, n_stages - 1):
                jn = j + 1
                if not feasible[jn]:
                    break
                dt = t[jn] - t[j]
                newval = np.full(m, inf)
                any_finite = False
                for k2 in range(m):
                    da = yn[jn] - xn[jn, k2]
                    amp = a2 * da * da
                    bcost = inf
                    bk = -1
                    for k1 in range(m):
                        v = val[k1]
                        if v == inf:
                            continue
                        slope = (tau[jn, k2] - tau[j, k1]) / dt
                        if slope < s_min - stol or slope > s_max + stol:
                            continue
                        dd = ydn[jn] - slope * xdn[jn, k2]
                        du = slope - target
                        c = v + dt * (amp + b2 * dd * dd + lam * du * du)
                        if c < bcost:
                            bcost = c
                            bk = k1
                    newval[k2] = bcost
                    parent[jn, k2] = bk
                    if bcost < inf:
                        any_finite = True
                val = newval
                if not any_finite:
                    break
                ef = end_first[jn]
                if ef < m:
                    delta = t[jn] - t[j0]
                    for k in range(ef, m):
                        if val[k] < inf:
                            avg = val[k] / delta
                            if avg < run_best:
                                run_best = avg
                                run_jend = jn
                                run_kend = k
            if run_best < best_avg:
                best_avg = run_best
                best_j0 = j0
                best_jend = run_jend
                for j in range(n_stages):
                    path[j] = -1
                k = run_kend
                for j in range(run_jend, j0, -1):
                    path[j] = k
                    k = parent[j, k]
                path[j0] = k
        return best_j0 >= 0, best_avg, best_j0, best_jend, path

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def _run_engine(t, tau, feasible, yn, ydn, xn, xdn, start_prefix, end_first,
                alpha, lam, target, s_min, s_max):
    args = (t, tau, feasible.astype(np.bool_), yn, ydn, xn, xdn,
            start_prefix, end_first, float(alpha), float(lam), float(target),
            float(s_min), float(s_max))
    if _HAVE_NUMBA:
        return _dp_kernel_numba(*args)
    return _dp_engine_numpy(*args)


def _norms(template: Curve, obs: Curve):
    return (sup_norm(template), sup_norm(template.derivative_curve()),
            sup_norm(obs), sup_norm(obs.derivative_curve()))


def dp_align(template: Curve, obs: Curve, grid: WarpGrid,
             params: RegistrationParams, alpha: float,
             _norm_cache=None) -> Alignment:
    """Minimum-average-cost monotone warping on a fixed grid.

    The cost of a path is the sum of its per-transition costs divided by the
    covered template-domain length, so paths over shorter domains are not
    preferred. The search is exact: within each admissible starting stage the
    covered length of every partial path is the same, so a shortest-path pass
    per starting stage minimizes the average.
    """
    global TRANSITION_COUNT
    ny, nyd, nx, nxd = _norm_cache if _norm_cache is not None else _norms(template, obs)
    t = grid.t_values
    yn = np.asarray(template.evaluate(t), dtype=float) / ny
    ydn = np.asarray(template.evaluate_derivative(t), dtype=float) / nyd
    flat = grid.tau_values.ravel()
    xn = np.asarray(obs.evaluate(flat), dtype=float).reshape(grid.tau_values.shape) / nx
    xdn = np.asarray(obs.evaluate_derivative(flat), dtype=float).reshape(
        grid.tau_values.shape) / nxd

    start_prefix = grid.start_prefix()
    end_first = grid.end_first_index()
    target = params.target_for(grid.template_domain, grid.obs_domain)
    found, avg, j0, j_end, path = _run_engine(
        t, grid.tau_values, grid.feasible, yn, ydn, xn, xdn, start_prefix,
        end_first, alpha, params.lam, target, params.s_min, params.s_max)
    m = grid.tau_values.shape[1]
    TRANSITION_COUNT += int(sum((t.size - 1 - int(j)) * m * m
                                for j in np.nonzero(start_prefix)[0]))
    if not found:
        raise NoFeasiblePath("no monotone path satisfies the slope box")

    stages = np.arange(j0, j_end + 1)
    knots = np.column_stack([t[stages], grid.tau_values[stages, path[stages]]])
    alignment = Alignment(
        warping_domain=(float(t[j0]), float(t[j_end])),
        warping_knots=knots,
        alpha=float(alpha),
        objective=float(avg),
        slope_target=target,
    )
    alignment.f_average = _knots_f_average(template, obs, knots, alpha,
                                           norms=(ny, nyd, nx, nxd))
    return alignment


def _knots_f_average(template, obs, knots, alpha, norms=None):
    """Average of the penalty-free alignment cost along a warping path."""
    ny, nyd, nx, nxd = norms if norms is not None else _norms(template, obs)
    t, h = knots[:, 0], knots[:, 1]
    dt = np.diff(t)
    slope = np.diff(h) / dt
    yn = np.asarray(template.evaluate(t[1:])) / ny
    ydn = np.asarray(template.evaluate_derivative(t[1:])) / nyd
    xn = np.asarray(obs.evaluate(h[1:])) / nx
    xdn = np.asarray(obs.evaluate_derivative(h[1:])) / nxd
    f = alpha ** 2 * (yn - xn) ** 2 + (1 - alpha) ** 2 * (ydn - slope * xdn) ** 2
    return float(np.sum(dt * f) / (t[-1] - t[0]))


def _refine_bounds(base: WarpGrid, alignment: Alignment, m_x: int,
                   window=None, smooth_window: int = 5) -> WarpGrid:
    """Re-center the per-stage bounds on the incumbent path.

    The window defaults to one base-grid spacing either side of a
    rolling-mean smoothing of the incumbent (extended at its terminal slopes
    beyond its domain), clipped to the base feasibility bounds. Smoothing
    matters: the raw incumbent oscillates between quantized candidates and a
    window glued to it can exclude the smooth optimum for good.
    """
    t = base.t_values
    knots = alignment.warping_knots
    kt, kh = knots[:, 0], knots[:, 1]
    center = np.interp(t, kt, kh)
    if kt.size >= 2:
        s0 = (kh[1] - kh[0]) / (kt[1] - kt[0])
        s1 = (kh[-1] - kh[-2]) / (kt[-1] - kt[-2])
        before = t < kt[0]
        after = t > kt[-1]
        center[before] = kh[0] + s0 * (t[before] - kt[0])
        center[after] = kh[-1] + s1 * (t[after] - kt[-1])
    if smooth_window > 1 and t.size > smooth_window:
        pad = smooth_window // 2
        # odd reflection continues the path linearly, so smoothing does not
        # bend the center away from pinched boundary nodes
        padded = np.pad(center, pad, mode="reflect", reflect_type="odd")
        kernel = np.full(smooth_window, 1.0 / smooth_window)
        center = np.convolve(padded, kernel, mode="valid")[: t.size]
    if window is None:
        window = (base.upper - base.lower) / (m_x - 1)
    lower = np.maximum(base.lower, center - window)
    upper = np.minimum(base.upper, center + window)
    crossed = lower > upper
    lower[crossed] = base.lower[crossed]
    upper[crossed] = base.upper[crossed]
    return _grid_from_bounds(t, lower, upper, m_x, base.start_slack,
                             base.end_slack, base.template_domain, base.obs_domain)


def oeb_fdtw(template: Curve, obs: Curve, params: RegistrationParams,
             start_slack=None, end_slack=None) -> Alignment:
    """Full alignment search: grid, refinement rounds, and amplitude-weight grid.

    Slacks default to 10% of the template and observation domain lengths.
    Ties between amplitude weights (within 1e-9 of objective) resolve to the
    largest weight.
    """
    span_y = template.domain[1] - template.domain[0]
    span_x = obs.domain[1] - obs.domain[0]
    if start_slack is None:
        start_slack = (0.1 * span_y, 0.1 * span_x)
    if end_slack is None:
        end_slack = (0.1 * span_y, 0.1 * span_x)
    norms = _norms(template, obs)
    best = None
    for alpha in params.alpha_grid:
        base = build_grid(template.domain, obs.domain, params, start_slack, end_slack)
        grid = base
        cand = None
        # full-width migration windows first (the path can wander off a poor
        # initial quantization), then two geometrically shrinking polish
        # rounds to push below the base grid resolution
        n_runs = params.refinement_rounds + 3
        for run in range(n_runs):
            try:
                aligned = dp_align(template, obs, grid, params, alpha,
                                   _norm_cache=norms)
            except NoFeasiblePath:
                break
            if cand is None or aligned.objective < cand.objective:
                cand = aligned
            if run == n_runs - 1:
                break
            polish = run >= params.refinement_rounds
            if polish:
                # center on the raw incumbent: it sits within one spacing of
                # the optimum, while the smoothed center would drift outside
                # the narrow window
                grid = _refine_bounds(
                    base, aligned, params.m_x,
                    window=(grid.upper - grid.lower) / (params.m_x - 1),
                    smooth_window=1)
            else:
                grid = _refine_bounds(base, aligned, params.m_x)
        if cand is None:
            continue
        if (best is None or cand.objective < best.objective - 1e-9
                or (abs(cand.objective - best.objective) <= 1e-9
                    and cand.alpha > best.alpha)):
            best = cand
    if best is None:
        raise NoFeasiblePath("no amplitude weight admits a feasible warping")
    return best


# -- smoothing-parameter selection --------------------------------------

def acd(template: Curve, sample: list[Curve], params: RegistrationParams,
        start_slack=None, end_slack=None) -> float:
    """Sum over the sample of the average penalty-free alignment cost."""
    if not sample:
        raise InvalidInput("sample must be nonempty")
    return float(sum(
        oeb_fdtw(template, obs, params, start_slack, end_slack).f_average
        for obs in sample))


def _affine_f_average(template: Curve, obs: Curve, params: RegistrationParams) -> float:
    """Penalty-free cost of the full-domain linear rescaling, minimized over
    the amplitude-weight grid. This is the infinite-penalty limit where the
    warping slope is pinned to the domain-length ratio."""
    a_y, b_y = template.domain
    a_x, b_x = obs.domain
    t = np.linspace(a_y, b_y, params.n_t + 1)
    h = a_x + (b_x - a_x) * (t - a_y) / (b_y - a_y)
    knots = np.column_stack([t, h])
    norms = _norms(template, obs)
    return min(_knots_f_average(template, obs, knots, alpha, norms=norms)
               for alpha in params.alpha_grid)


def acd_infinity(template: Curve, sample: list[Curve],
                 params: RegistrationParams) -> float:
    if not sample:
        raise InvalidInput("sample must be nonempty")
    return float(sum(_affine_f_average(template, obs, params) for obs in sample))


@dataclass(frozen=True)
class LambdaSelection:
    value: float
    no_phase_variation: bool
    table: dict  # lambda -> ACD, plus float('inf') -> pinned-slope ACD


def select_lambda(template: Curve, sample: list[Curve], lambda_grid,
                  delta: float, params: RegistrationParams,
                  start_slack=None, end_slack=None) -> LambdaSelection:
    """Largest penalty whose alignment-cost increase over the unpenalized fit
    stays within a fraction ``delta`` of the full range up to the
    pinned-slope (linear rescaling) limit."""
    lams = sorted(float(v) for v in lambda_grid)
    if not lams:
        raise InvalidInput("lambda grid must be nonempty")
    if not 0 < delta < 1:
        raise InvalidInput("delta must be in (0, 1)")
    table = {}
    for lam in dict.fromkeys([0.0] + lams):
        table[lam] = acd(template, sample, replace(params, lam=lam),
                         start_slack, end_slack)
    acd0 = table[0.0]
    acd_inf = acd_infinity(template, sample, params)
    table[np.inf] = acd_inf
    spread = acd_inf - acd0
    tol = 1e-9 * max(abs(acd0), abs(acd_inf), 1.0)
    if spread <= tol:
        warn("alignment cost does not grow toward the pinned-slope limit; "
             "sample shows no phase variation", NoPhaseVariationWarning)
        return LambdaSelection(lams[-1], True, table)
    qualifying = [lam for lam in lams if table[lam] - acd0 <= delta * spread]
    value = max(qualifying) if qualifying else lams[0]
    return LambdaSelection(value, False, table)


# -- template estimation -------------------------------------------------

def registered_values(template: Curve, obs: Curve, alignment: Alignment,
                      t_grid: np.ndarray) -> np.ndarray:
    """Registered curve on a template-domain grid, template-shift imputed
    outside the alignment domain to preserve continuity."""
    a_i, b_i = alignment.warping_domain
    h = alignment.warping_curve()
    y = np.asarray(template.evaluate(t_grid), dtype=float)
    out = np.empty_like(y)
    inside = (t_grid >= a_i) & (t_grid <= b_i)
    out[inside] = obs.evaluate(np.clip(h.evaluate(t_grid[inside]), *obs.domain))
    x_left = float(obs.evaluate(np.clip(h.evaluate(a_i), *obs.domain)))
    x_right = float(obs.evaluate(np.clip(h.evaluate(b_i), *obs.domain)))
    before = t_grid < a_i
    after = t_grid > b_i
    out[before] = y[before] + x_left - float(template.evaluate(a_i))
    out[after] = y[after] + x_right - float(template.evaluate(b_i))
    return out


def procrustes_template(sample: list[Curve], n_iter: int, init,
                        params: RegistrationParams, rng=None,
                        grid_size: int = 201) -> Curve:
    """Iteratively register the sample to the running template and replace it
    with the cross-sectional mean of the registered (and imputed) curves."""
    if not sample:
        raise InvalidInput("sample must be nonempty")
    if n_iter < 1:
        raise InvalidInput("need at least one iteration")
    if isinstance(init, Curve):
        template = init
    elif init == "random-member":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        template = sample[int(rng.integers(len(sample)))]
    else:
        raise InvalidInput('init must be a Curve or "random-member"')

    t_grid = np.linspace(template.domain[0], template.domain[1], grid_size)
    for _ in range(n_iter):
        stack = np.empty((len(sample), t_grid.size))
        for i, obs in enumerate(sample):
            alignment = oeb_fdtw(template, obs, params)
            stack[i] = registered_values(template, obs, alignment, t_grid)
        template = fit_smooth(SampledCurve(t_grid, stack.mean(axis=0)), 0.0)
    return template
