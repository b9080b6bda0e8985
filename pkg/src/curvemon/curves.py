"""Penalized cubic B-spline smoothing of discretely sampled curves.

Functional observations arrive as noisy (time, value) samples; everything
downstream works with smooth, differentiable curves. A curve is a cubic
piecewise polynomial with an explicit compact domain.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import BSpline, PchipInterpolator, PPoly, make_interp_spline

from .errors import DegenerateNorm, DomainError, InsufficientData, InvalidInput

MAX_INTERIOR_KNOTS = 80
_GCV_GRID_SIZE = 25


@dataclass(frozen=True)
class SampledCurve:
    """Raw discrete observations of one functional quality characteristic."""

    abscissae: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.abscissae, dtype=float)
        y = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "abscissae", x)
        object.__setattr__(self, "values", y)
        if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
            raise InvalidInput("abscissae and values must be 1-d and equally long")
        if x.size < 4:
            raise InsufficientData(f"need at least 4 samples, got {x.size}")
        if not np.all(np.diff(x) > 0):
            raise InvalidInput("abscissae must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("samples must be finite")

    def __len__(self) -> int:
        return int(self.abscissae.size)

    def truncated(self, x_max: float) -> "SampledCurve":
        """Samples with abscissa <= x_max (the partially observed prefix)."""
        keep = self.abscissae <= x_max + 1e-12
        return SampledCurve(self.abscissae[keep], self.values[keep])


@dataclass
class Curve:
    """A cubic spline on a compact interval, evaluable with first derivative."""

    domain: tuple[float, float]
    _f: object = field(repr=False)
    _df: object = field(repr=False, default=None)

    def __post_init__(self):
        a, b = self.domain
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise InvalidInput(f"domain must be a nonempty interval, got {self.domain}")
        self.domain = (float(a), float(b))
        if self._df is None:
            self._df = self._f.derivative()

    # -- construction -------------------------------------------------

    @classmethod
    def from_samples(cls, x, y, kind: str = "cubic") -> "Curve":
        """Interpolating curve through (x, y); 'pchip' preserves monotonicity."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if kind == "pchip":
            f = PchipInterpolator(x, y, extrapolate=True)
        elif kind == "cubic":
            f = make_interp_spline(x, y, k=min(3, x.size - 1))
        else:
            raise InvalidInput(f"unknown interpolation kind {kind!r}")
        return cls(domain=(x[0], x[-1]), _f=f)

    # -- evaluation ---------------------------------------------------

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.domain
        tol = 1e-9 * (b - a)
        if np.any(t < a - tol) or np.any(t > b + tol):
            raise DomainError(
                f"evaluation point outside domain [{a:g}, {b:g}]"
            )
        return np.clip(t, a, b)

    def evaluate(self, t):
        """Spline value at t (scalar or array), t within the domain."""
        t = self._check(t)
        out = self._f(t)
        return float(out) if out.ndim == 0 else out

    def evaluate_derivative(self, t):
        """Analytic first derivative of the spline expansion at t."""
        t = self._check(t)
        out = self._df(t)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], n)

    def derivative_curve(self) -> "Curve":
        """The first derivative as a curve on the same domain."""
        return Curve(domain=self.domain, _f=self._df)

    def restrict(self, a: float, b: float) -> "Curve":
        """Same spline on a subinterval [a, b] of the current domain."""
        lo, hi = self.domain
        tol = 1e-9 * (hi - lo)
        if a < lo - tol or b > hi + tol or a >= b:
            raise DomainError(f"[{a:g}, {b:g}] is not a subinterval of [{lo:g}, {hi:g}]")
        return Curve(domain=(max(a, lo), min(b, hi)), _f=self._f, _df=self._df)

    # -- persistence --------------------------------------------------

    def to_dict(self) -> dict:
        f = self._f
        if isinstance(f, BSpline):
            return {
                "kind": "bspline",
                "domain": list(self.domain),
                "knots": f.t.tolist(),
                "coefficients": f.c.tolist(),
                "degree": int(f.k),
            }
        p = f if isinstance(f, PPoly) else PPoly.from_spline(f)
        return {
            "kind": "ppoly",
            "domain": list(self.domain),
            "breakpoints": p.x.tolist(),
            "coefficients": p.c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        if d["kind"] == "bspline":
            f = BSpline(
                np.asarray(d["knots"]), np.asarray(d["coefficients"]), d["degree"],
                extrapolate=True,
            )
        elif d["kind"] == "ppoly":
            f = PPoly(np.asarray(d["coefficients"]), np.asarray(d["breakpoints"]),
                      extrapolate=True)
        else:
            raise InvalidInput(f"unknown curve kind {d.get('kind')!r}")
        return cls(domain=tuple(d["domain"]), _f=f)


def _basis_and_penalty(x: np.ndarray, max_interior: int):
    """Clamped cubic B-spline basis at the sample sites plus the matrix of
    pairwise integrals of basis second derivatives.

    Interior knots sit at the abscissae except the two nearest each boundary
    (the usual not-a-knot placement), so the unpenalized fit is the unique
    interpolating spline; beyond the cap they are uniformly thinned.
    """
    a, b = x[0], x[-1]
    interior = x[2:-2]
    if interior.size > max_interior:
        idx = np.unique(np.linspace(0, interior.size - 1, max_interior).round().astype(int))
        interior = interior[idx]
    t = np.concatenate([[a] * 4, interior, [b] * 4])
    n_basis = t.size - 4
    design = BSpline.design_matrix(x, t, 3).toarray()

    # Second derivatives of cubic B-splines are piecewise linear, so their
    # pairwise products integrate exactly with two-point Gauss per span.
    basis = BSpline(t, np.eye(n_basis), 3, extrapolate=False)
    d2 = basis.derivative(2)
    spans = np.unique(t)
    mid = 0.5 * (spans[:-1] + spans[1:])
    half = 0.5 * np.diff(spans)
    nodes = np.concatenate([mid - half / np.sqrt(3), mid + half / np.sqrt(3)])
    weights = np.concatenate([half, half])
    vals = d2(nodes)
    vals[~np.isfinite(vals)] = 0.0
    penalty = (vals * weights[:, None]).T @ vals
    return t, design, penalty


def fit_smooth(samples: SampledCurve, roughness_penalty) -> Curve:
    """Fit a cubic smoothing spline to discrete samples.

    Minimizes the residual sum of squares plus ``roughness_penalty`` times
    the integrated squared second derivative. Pass ``"auto"`` to pick the
    penalty by generalized cross-validation.
    """
    if not isinstance(samples, SampledCurve):
        samples = SampledCurve(*samples)
    x, y = samples.abscissae, samples.values
    t, design, penalty = _basis_and_penalty(x, MAX_INTERIOR_KNOTS)

    if isinstance(roughness_penalty, str):
        if roughness_penalty != "auto":
            raise InvalidInput(f"unknown penalty sentinel {roughness_penalty!r}")
        lam = _gcv_penalty(design, penalty, y)
    else:
        lam = float(roughness_penalty)
        if lam < 0:
            raise InvalidInput("roughness penalty must be nonnegative")

    coef = _penalized_solve(design, penalty, y, lam)
    spline = BSpline(t, coef, 3, extrapolate=True)
    return Curve(domain=(float(x[0]), float(x[-1])), _f=spline)


def _penalized_solve(design, penalty, y, lam):
    gram = design.T @ design
    if lam == 0.0:
        # Min-norm least squares: interpolates whenever the basis can.
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return coef
    return np.linalg.solve(gram + lam * penalty, design.T @ y)


def _gcv_penalty(design, penalty, y):
    """Generalized cross-validation over a log-spaced penalty grid."""
    n = y.size
    gram = design.T @ design
    rhs = design.T @ y
    scale = np.trace(gram) / max(np.trace(penalty), 1e-300)
    grid = scale * np.logspace(-9, 3, _GCV_GRID_SIZE)
    best_lam, best_score = grid[0], np.inf
    for lam in grid:
        a = gram + lam * penalty
        try:
            coef = np.linalg.solve(a, rhs)
            edof = np.trace(np.linalg.solve(a, gram))
        except np.linalg.LinAlgError:
            continue
        if edof >= n - 1e-9:
            continue
        rss = float(np.sum((design @ coef - y) ** 2))
        score = n * rss / (n - edof) ** 2
        if score < best_score:
            best_lam, best_score = lam, score
    return best_lam


def sup_norm(curve: Curve, n_grid: int = 512) -> float:
    """Max absolute value over a dense grid of the domain (plus any knots)."""
    pts = curve.grid(n_grid)
    knots = getattr(curve._f, "t", None)
    if knots is None:
        knots = getattr(curve._f, "x", None)
    if knots is not None:
        a, b = curve.domain
        inside = knots[(knots >= a) & (knots <= b)]
        pts = np.union1d(pts, inside)
    value = float(np.max(np.abs(curve.evaluate(pts))))
    if value == 0.0:
        raise DegenerateNorm("curve is identically zero on its domain")
    return value


# -- file formats -----------------------------------------------------

def load_curve_csv(path) -> SampledCurve:
    """Read one curve from a two-column (time, value) CSV file."""
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                continue  # header line
            xs.append(t)
            ys.append(v)
    return SampledCurve(np.asarray(xs), np.asarray(ys))


def save_curve_csv(path, samples: SampledCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "value"])
        for t, v in zip(samples.abscissae, samples.values):
            writer.writerow([repr(float(t)), repr(float(v))])


def load_curves_json(path) -> list[tuple[str, SampledCurve]]:
    """Read a batch of curves: a JSON array of {id, t: [...], y: [...]}."""
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise InvalidInput("batch file must contain a JSON array")
    out = []
    for rec in records:
        out.append((str(rec["id"]), SampledCurve(np.asarray(rec["t"]), np.asarray(rec["y"]))))
    return out


def save_curves_json(path, curves: list[tuple[str, SampledCurve]]) -> None:
    records = [
        {"id": cid, "t": sc.abscissae.tolist(), "y": sc.values.tolist()}
        for cid, sc in curves
    ]
    Path(path).write_text(json.dumps(records, separators=(",", ":")))
