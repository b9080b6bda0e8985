"""Control charting of registered partial observations.

Two charts run side by side on the principal-component scores: the
standardized squared score distance and the weighted squared residual norm.
Limits are empirical kernel-density quantiles of the tuning-set statistics,
with the per-point level corrected for the two simultaneous charts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .curves import Curve, SampledCurve, fit_smooth
from .errors import (
    CurvemonError,
    DegenerateSampleWarning,
    InsufficientData,
    InvalidAlpha,
    InvalidInput,
)
from .mfpca import (
    MfpcaModel,
    MixedObservation,
    Weights,
    project,
    reconstruct,
    stack_observation,
    to_mixed,
)
from .realtime import (
    Band,
    RealtimeState,
    RelaxationParams,
    impute_complete,
    register_partial,
    registered_curve,
)
from .registration import RegistrationParams

KDE_GRID_SIZE = 1000


def sidak(alpha: float, n_charts: int = 2) -> float:
    """Per-chart level controlling the family-wise error over both charts."""
    if not 0 < alpha < 1:
        raise InvalidAlpha(f"overall level must be in (0, 1), got {alpha}")
    return 1.0 - (1.0 - alpha) ** (1.0 / n_charts)


def t2(scores, eigenvalues) -> float:
    """Standardized squared distance from the center of the score space."""
    scores = np.asarray(scores, dtype=float)
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if scores.shape != eigenvalues.shape:
        raise InvalidInput("scores and eigenvalues must have equal length")
    if np.any(eigenvalues <= 0):
        raise InvalidInput("eigenvalues must be positive")
    return float(np.sum(scores**2 / eigenvalues))


def spe(z: MixedObservation, z_hat: MixedObservation, weights: Weights) -> float:
    """Weighted squared norm of the component-wise difference."""
    va = stack_observation(z, weights.grid)
    vb = stack_observation(z_hat, weights.grid)
    return float(np.sum(weights.metric() * (va - vb) ** 2))


# -- bandwidth selection and density quantiles --------------------------

def _phi4(x):
    return (x**4 - 6 * x**2 + 3) * np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)


def _phi6(x):
    return (x**6 - 15 * x**4 + 45 * x**2 - 15) * np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)


def _binned_pair_weights(values: np.ndarray, n_bins: int):
    """Bin counts and the per-distance count of ordered pairs, so double sums
    over pairs reduce to one pass over bin distances."""
    lo, hi = float(values.min()), float(values.max())
    counts, _ = np.histogram(values, bins=n_bins, range=(lo, hi))
    pair = np.correlate(counts.astype(float), counts.astype(float), mode="full")
    pair = pair[n_bins - 1:]  # distances 0, 1, ..., n_bins-1
    delta = (hi - lo) / n_bins
    return pair, delta


def _pair_sum(func, pair_counts, delta, bandwidth, n):
    d = np.arange(pair_counts.size) * delta / bandwidth
    vals = func(d)
    total = pair_counts[0] * vals[0] + 2.0 * np.sum(pair_counts[1:] * vals[1:])
    return total - n * func(0.0)  # remove the i == j diagonal


def silverman_bandwidth(values: np.ndarray) -> float:
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349)
    if spread <= 0:
        spread = max(sd, 1e-12)
    return 0.9 * spread * values.size ** (-0.2)


def sheather_jones_bandwidth(values: np.ndarray, n_bins: int = 1000) -> float:
    """Solve-the-equation plug-in bandwidth for a Gaussian kernel.

    Falls back to Silverman's rule when the nonlinear solve cannot be
    bracketed (heavily discrete or tiny samples).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    scale = min(sd, (q75 - q25) / 1.349)
    if scale <= 0:
        scale = sd
    pair, delta = _binned_pair_weights(values, min(n_bins, max(n, 2)))

    a = 0.920 * scale * n ** (-1.0 / 7.0)
    b = 0.912 * scale * n ** (-1.0 / 9.0)
    s_a = _pair_sum(_phi4, pair, delta, a, n) / (n * (n - 1) * a**5)
    t_b = -_pair_sum(_phi6, pair, delta, b, n) / (n * (n - 1) * b**7)
    if not (np.isfinite(s_a) and np.isfinite(t_b)) or s_a <= 0 or t_b <= 0:
        warnings.warn("plug-in functionals are degenerate; using Silverman's "
                      "rule", DegenerateSampleWarning)
        return silverman_bandwidth(values)

    rk = 1.0 / (2.0 * np.sqrt(np.pi))

    def equation(h):
        pilot = 1.357 * (s_a / t_b) ** (1.0 / 7.0) * h ** (5.0 / 7.0)
        s_pilot = _pair_sum(_phi4, pair, delta, pilot, n) / (n * (n - 1) * pilot**5)
        if s_pilot <= 0:
            return np.inf
        return (rk / (n * s_pilot)) ** 0.2 - h

    h0 = silverman_bandwidth(values)
    lo, hi = h0 / 16.0, h0 * 16.0
    try:
        f_lo = equation(lo)
        while not np.isfinite(f_lo) and lo < hi / 2:
            # tiny pilots can push the curvature functional nonpositive;
            # shrink the bracket until the equation is finite
            lo *= 2.0
            f_lo = equation(lo)
        f_hi = equation(hi)
        if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0:
            raise ValueError("no sign change")
        return float(brentq(equation, lo, hi, xtol=1e-12 * h0))
    except ValueError:
        warnings.warn("bandwidth equation could not be solved; using "
                      "Silverman's rule", DegenerateSampleWarning)
        return h0


def kde_quantile(values, p: float, n_grid: int = KDE_GRID_SIZE) -> float:
    """Quantile of the Gaussian-kernel-smoothed distribution.

    The smoothed CDF is evaluated on equally spaced points spanning three
    bandwidths past the sample range and inverted by monotone interpolation.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 20:
        raise InsufficientData(f"need at least 20 values, got {values.size}")
    if not 0 < p < 1:
        raise InvalidInput("quantile level must be in (0, 1)")
    if values.max() == values.min():
        warnings.warn("sample has zero spread; returning the common value",
                      DegenerateSampleWarning)
        return float(values[0])
    h = sheather_jones_bandwidth(values)
    grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, n_grid)
    cdf = np.zeros(n_grid)
    chunk = max(1, int(2e6 / n_grid))
    for start in range(0, values.size, chunk):
        block = values[start:start + chunk]
        cdf += ndtr((grid[None, :] - block[:, None]) / h).sum(axis=0)
    cdf /= values.size
    cdf = np.maximum.accumulate(cdf)
    if p <= cdf[0]:
        return float(grid[0])
    if p >= cdf[-1]:
        return float(grid[-1])
    return float(np.interp(p, cdf, grid))


def fit_limits(t2_samples: np.ndarray, spe_samples: np.ndarray,
               alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid-point control limits at the corrected per-chart level.

    Inputs are (curve, grid point) matrices of tuning-set statistics; NaN
    entries mark unmonitorable points and are ignored.
    """
    level = 1.0 - sidak(alpha)
    t2_samples = np.asarray(t2_samples, dtype=float)
    spe_samples = np.asarray(spe_samples, dtype=float)
    if t2_samples.shape != spe_samples.shape:
        raise InvalidInput("statistic matrices must have equal shapes")
    n_points = t2_samples.shape[1]
    t2_limits = np.empty(n_points)
    spe_limits = np.empty(n_points)
    for j in range(n_points):
        t2_col = t2_samples[:, j]
        spe_col = spe_samples[:, j]
        t2_limits[j] = kde_quantile(t2_col[~np.isnan(t2_col)], level)
        spe_limits[j] = kde_quantile(spe_col[~np.isnan(spe_col)], level)
    return t2_limits, spe_limits


# -- the scheme and the per-curve monitor --------------------------------

@dataclass
class ControlScheme:
    """Everything Phase II needs: per-point limits and the per-truncation-time
    model family."""

    monitoring_grid: np.ndarray
    t2_limits: np.ndarray
    spe_limits: np.ndarray
    alpha: float
    model_family: list[MfpcaModel]        # ascending truncation times

    def __post_init__(self):
        self.monitoring_grid = np.asarray(self.monitoring_grid, dtype=float)
        self.t2_limits = np.asarray(self.t2_limits, dtype=float)
        self.spe_limits = np.asarray(self.spe_limits, dtype=float)
        times = [m.truncation_time for m in self.model_family]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInput("model family must be sorted by truncation time")

    @property
    def alpha_star(self) -> float:
        return sidak(self.alpha)

    def model_for(self, t: float) -> MfpcaModel:
        """The model with the smallest truncation time covering t (the last
        model when t runs past the family)."""
        times = np.array([m.truncation_time for m in self.model_family])
        idx = int(np.searchsorted(times, t - 1e-12))
        return self.model_family[min(idx, len(self.model_family) - 1)]

    def to_dict(self) -> dict:
        return {
            "monitoring_grid": self.monitoring_grid.tolist(),
            "t2_limits": self.t2_limits.tolist(),
            "spe_limits": self.spe_limits.tolist(),
            "alpha": self.alpha,
            "model_family": [m.to_dict() for m in self.model_family],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlScheme":
        return cls(
            np.asarray(d["monitoring_grid"]), np.asarray(d["t2_limits"]),
            np.asarray(d["spe_limits"]), float(d["alpha"]),
            [MfpcaModel.from_dict(m) for m in d["model_family"]],
        )


@dataclass
class MonitoringResult:
    """Chart statistics of one curve along the monitoring grid."""

    curve_id: str
    x: np.ndarray
    t2: np.ndarray
    spe: np.ndarray
    t2_limit: np.ndarray
    spe_limit: np.ndarray
    monitorable: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def alarm(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.monitorable & ((self.t2 > self.t2_limit)
                                       | (self.spe > self.spe_limit))

    @property
    def first_alarm_x(self):
        hits = np.nonzero(self.alarm)[0]
        return float(self.x[hits[0]]) if hits.size else None


@dataclass(frozen=True)
class MonitorSettings:
    """Solver configuration shared by the tuning pass and Phase II."""

    reg_params: RegistrationParams
    relax: RelaxationParams = RelaxationParams()
    smoothing_penalty: object = "auto"
    min_points: int = 5


@dataclass
class TraceRecord:
    """One successful real-time registration of a growing curve prefix."""

    x: float
    t_star: float
    alignment: object
    partial: Curve


def trace_curve(samples: SampledCurve, grid: np.ndarray, template: Curve,
                band: Band, settings: MonitorSettings):
    """Register the growing prefix of one curve at every grid point.

    Returns a record per grid point (None where the point is unmonitorable)
    plus the failure notes.
    """
    records: list[TraceRecord | None] = [None] * grid.size
    notes = []
    state = RealtimeState(monitor_span=float(grid[-1] - grid[0]))
    x_max = float(samples.abscissae[-1])
    for j, x in enumerate(grid):
        if x > x_max + 1e-12:
            break
        n_inside = int(np.sum(samples.abscissae <= x + 1e-12))
        if n_inside < max(4, settings.min_points):
            notes.append((float(x), "too few points"))
            continue
        try:
            partial = fit_smooth(samples.truncated(x), settings.smoothing_penalty)
            alignment, t_star = register_partial(
                template, partial, band, state, settings.reg_params,
                settings.relax)
            state.observe(x, t_star, alignment.terminal_slope(
                settings.relax.slope_neighborhood), settings.relax)
            records[j] = TraceRecord(float(x), float(t_star), alignment, partial)
        except CurvemonError as exc:
            notes.append((float(x), f"{type(exc).__name__}: {exc}"))
    return records, notes


def project_record(record: TraceRecord, model: MfpcaModel,
                   template: Curve) -> tuple[float, float]:
    """Chart statistics of one trace record under one model: extend or
    truncate the pair to the model domain, transform, project."""
    a_y = template.domain[0]
    t_g = model.truncation_time
    alignment = record.alignment
    if t_g < alignment.warping_domain[1]:
        alignment = alignment.truncated(t_g)
    pair = impute_complete(alignment, registered_curve(record.partial, alignment),
                           template.restrict(a_y, t_g), record.partial.domain)
    z = to_mixed(pair.warping, pair.registered)
    scores = project(model, z)
    return (t2(scores, model.eigenvalues),
            spe(z, reconstruct(model, scores), model.weights))


def monitor(samples: SampledCurve, scheme: ControlScheme, template: Curve,
            band: Band, settings: MonitorSettings,
            curve_id: str = "") -> MonitoringResult:
    """Walk the monitoring grid, registering the growing prefix of one curve
    and charting its statistics. Registration failures mark single points as
    unmonitorable rather than aborting the curve."""
    grid = scheme.monitoring_grid
    n = grid.size
    t2_vals = np.full(n, np.nan)
    spe_vals = np.full(n, np.nan)
    monitorable = np.zeros(n, dtype=bool)
    records, notes = trace_curve(samples, grid, template, band, settings)
    for j, record in enumerate(records):
        if record is None:
            continue
        try:
            model = scheme.model_for(record.t_star)
            t2_vals[j], spe_vals[j] = project_record(record, model, template)
            monitorable[j] = True
        except CurvemonError as exc:
            notes.append((float(grid[j]), f"{type(exc).__name__}: {exc}"))
    return MonitoringResult(
        curve_id=curve_id, x=grid.copy(), t2=t2_vals, spe=spe_vals,
        t2_limit=scheme.t2_limits.copy(), spe_limit=scheme.spe_limits.copy(),
        monitorable=monitorable, notes=notes)


def far_tdr(results: list[MonitoringResult],
            change_point_x: float | None = None) -> tuple[float | None, float | None]:
    """Mean fraction of monitored grid points flagged, split at the change
    point into the in-control and out-of-control regions."""
    if not results:
        raise InvalidInput("results must be nonempty")
    far_fracs, tdr_fracs = [], []
    for res in results:
        alarm = res.alarm
        ok = res.monitorable
        if change_point_x is None:
            ic = ok
            oc = np.zeros_like(ok)
        else:
            ic = ok & (res.x < change_point_x)
            oc = ok & (res.x >= change_point_x)
        if ic.any():
            far_fracs.append(alarm[ic].mean())
        if oc.any():
            tdr_fracs.append(alarm[oc].mean())
    far = float(np.mean(far_fracs)) if far_fracs else None
    tdr = float(np.mean(tdr_fracs)) if tdr_fracs else None
    return far, tdr


# -- trivial pointwise baseline ------------------------------------------

def pointwise_limits(value_matrix: np.ndarray, alpha: float):
    """Per-grid-point two-sided empirical-KDE limits on the raw values."""
    value_matrix = np.asarray(value_matrix, dtype=float)
    lower = np.empty(value_matrix.shape[1])
    upper = np.empty(value_matrix.shape[1])
    for j in range(value_matrix.shape[1]):
        col = value_matrix[:, j]
        col = col[~np.isnan(col)]
        lower[j] = kde_quantile(col, alpha / 2)
        upper[j] = kde_quantile(col, 1 - alpha / 2)
    return lower, upper


def pointwise_monitor(samples: SampledCurve, grid: np.ndarray,
                      lower: np.ndarray, upper: np.ndarray,
                      curve_id: str = "") -> MonitoringResult:
    """Shewhart-style check of the interpolated raw value at each grid point."""
    grid = np.asarray(grid, dtype=float)
    x_max = float(samples.abscissae[-1])
    monitorable = grid <= x_max + 1e-12
    values = np.interp(grid, samples.abscissae, samples.values)
    values[~monitorable] = np.nan
    below = values - lower   # alarm when negative
    above = upper - values
    stat = np.where(below < above, below, above)
    return MonitoringResult(
        curve_id=curve_id, x=grid.copy(),
        t2=-stat, spe=np.zeros_like(stat),
        t2_limit=np.zeros_like(stat), spe_limit=np.full_like(stat, np.inf),
        monitorable=monitorable)
