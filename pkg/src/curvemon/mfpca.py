"""Mixed principal component analysis over amplitude and phase components.

Each registered pair is mapped to a quadruple: the registered curve, the
centered-log-ratio transform of the normalized warping derivative, the
warping value at the left boundary, and the log of the warping range. The
two functional parts and two scalars live in a product space with a
weighted inner product whose weights equalize the variance contributed by
each block. Principal components are computed on a quadrature grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator, PPoly

from .curves import Curve
from .errors import (
    DegenerateComponentWarning,
    DomainError,
    InvalidInput,
    InvalidWarping,
    NotMonotone,
)

VARIANCE_FLOOR = 1e-10
DERIVATIVE_FLOOR = 1e-8
DEFAULT_K = (0.5, 0.5 / 3, 0.5 / 3, 0.5 / 3)


@dataclass
class MixedObservation:
    """Amplitude curve, clr-transformed phase curve, and the two warping
    boundary scalars."""

    x_star: Curve
    v: Curve
    f0: float
    f1_tilde: float

    @property
    def domain(self) -> tuple[float, float]:
        return self.x_star.domain


def to_mixed(warping: Curve, registered: Curve, n_grid: int = 512) -> MixedObservation:
    """Transform a (warping, registered) pair into the mixed space."""
    a, b = warping.domain
    t = np.linspace(a, b, n_grid)
    deriv = np.asarray(warping.evaluate_derivative(t), dtype=float)
    if np.any(deriv <= 0):
        raise NotMonotone("warping derivative must be positive on its domain")
    f0 = float(warping.evaluate(a))
    f1 = float(warping.evaluate(b))
    if f1 <= f0:
        raise InvalidWarping("warping range is empty (F1 <= F0)")
    norm_deriv = np.maximum(deriv / (f1 - f0), DERIVATIVE_FLOOR)
    log_deriv = np.log(norm_deriv)
    mean = np.trapezoid(log_deriv, t) / (b - a)
    v_curve = Curve.from_samples(t, log_deriv - mean)
    return MixedObservation(
        x_star=registered, v=v_curve, f0=f0, f1_tilde=float(np.log(f1 - f0)))


def from_mixed(z: MixedObservation, n_grid: int = 512) -> tuple[Curve, Curve]:
    """Invert the mixed-space map: rebuild the warping from the clr curve and
    boundary scalars. Returns (warping, registered)."""
    a, b = z.v.domain
    t = np.linspace(a, b, n_grid)
    density = np.exp(np.asarray(z.v.evaluate(t), dtype=float))
    antideriv = PchipInterpolator(t, density).antiderivative()
    total = float(antideriv(b) - antideriv(a))
    # affine-normalize the antiderivative: h = f0 + e^{f1_tilde} (H - H(a)) / total
    scale = np.exp(z.f1_tilde) / total
    coeffs = antideriv.c * scale
    coeffs[-1] += z.f0 - float(antideriv(a)) * scale
    warping = Curve(domain=(a, b), _f=PPoly(coeffs, antideriv.x, extrapolate=True))
    return warping, z.x_star


@dataclass
class Weights:
    """Block weights of the mixed inner product on a quadrature grid."""

    grid: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w3: float
    w4: float
    k: tuple[float, float, float, float]

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.w1 = np.asarray(self.w1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        if np.any(self.w1 <= 0) or np.any(self.w2 <= 0) or self.w3 <= 0 or self.w4 <= 0:
            raise InvalidInput("weights must be strictly positive")

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def quadrature(self) -> np.ndarray:
        """Trapezoid weights on the grid."""
        d = np.diff(self.grid)
        q = np.zeros_like(self.grid)
        q[:-1] += d / 2
        q[1:] += d / 2
        return q

    def metric(self) -> np.ndarray:
        """Diagonal of the inner product on stacked vectors."""
        q = self.quadrature()
        return np.concatenate([self.w1 * q, self.w2 * q, [self.w3], [self.w4]])

    def to_dict(self) -> dict:
        return {"grid": self.grid.tolist(), "w1": self.w1.tolist(),
                "w2": self.w2.tolist(), "w3": self.w3, "w4": self.w4,
                "k": list(self.k)}

    @classmethod
    def from_dict(cls, d: dict) -> "Weights":
        return cls(np.asarray(d["grid"]), np.asarray(d["w1"]), np.asarray(d["w2"]),
                   float(d["w3"]), float(d["w4"]), tuple(d["k"]))


def stack_observation(z: MixedObservation, grid: np.ndarray) -> np.ndarray:
    """Evaluate the two functional parts on the grid and append the scalars."""
    a, b = grid[0], grid[-1]
    tol = 1e-9 * (b - a)
    za, zb = z.domain
    if za > a + tol or zb < b - tol:
        raise DomainError(
            f"observation domain [{za:g}, {zb:g}] does not cover [{a:g}, {b:g}]")
    return np.concatenate([
        np.asarray(z.x_star.evaluate(grid), dtype=float),
        np.asarray(z.v.evaluate(grid), dtype=float),
        [z.f0], [z.f1_tilde],
    ])


def inner(za_vec: np.ndarray, zb_vec: np.ndarray, weights: Weights) -> float:
    """Weighted inner product of stacked observations."""
    return float(np.sum(weights.metric() * za_vec * zb_vec))


def fit_weights(sample: list[MixedObservation], k=DEFAULT_K,
                n_grid: int = 201) -> Weights:
    """Block weights from the pointwise and scalar sample variances.

    Each functional weight is k over the pointwise variance times the domain
    length; each scalar weight is k over the scalar variance. With
    k = (1, 1, 1, 1) every block contributes unit total weighted variance.
    """
    if len(sample) < 2:
        raise InvalidInput("need at least 2 observations to estimate variances")
    if len(k) != 4 or any(v <= 0 for v in k):
        raise InvalidInput("k must be four positive constants")
    a, b = sample[0].domain
    grid = np.linspace(a, b, n_grid)
    stacked = np.stack([stack_observation(z, grid) for z in sample])
    q = n_grid
    var_x = stacked[:, :q].var(axis=0, ddof=1)
    var_v = stacked[:, q:2 * q].var(axis=0, ddof=1)
    var_f0 = stacked[:, -2].var(ddof=1)
    var_f1 = stacked[:, -1].var(ddof=1)
    floored = (np.any(var_x < VARIANCE_FLOOR) or np.any(var_v < VARIANCE_FLOOR)
               or var_f0 < VARIANCE_FLOOR or var_f1 < VARIANCE_FLOOR)
    if floored:
        warnings.warn("a variance component is numerically zero; weights were "
                      "floored", DegenerateComponentWarning)
    span = b - a
    return Weights(
        grid=grid,
        w1=k[0] / (np.maximum(var_x, VARIANCE_FLOOR) * span),
        w2=k[1] / (np.maximum(var_v, VARIANCE_FLOOR) * span),
        w3=k[2] / max(var_f0, VARIANCE_FLOOR),
        w4=k[3] / max(var_f1, VARIANCE_FLOOR),
        k=tuple(float(v) for v in k),
    )


@dataclass
class MfpcaModel:
    """Weighted principal components of the mixed space at one truncation time."""

    truncation_time: float
    grid: np.ndarray
    mean: np.ndarray                 # stacked mean vector
    eigenfunctions: np.ndarray       # (L, len(mean)) stacked, orthonormal in w
    eigenvalues: np.ndarray          # descending, positive
    weights: Weights
    explained_fraction: float

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    def mean_observation(self) -> MixedObservation:
        return _unstack(self.mean, self.grid)

    def to_dict(self) -> dict:
        return {
            "truncation_time": self.truncation_time,
            "grid": self.grid.tolist(),
            "mean": self.mean.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "weights": self.weights.to_dict(),
            "explained_fraction": self.explained_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MfpcaModel":
        return cls(
            truncation_time=float(d["truncation_time"]),
            grid=np.asarray(d["grid"]),
            mean=np.asarray(d["mean"]),
            eigenfunctions=np.asarray(d["eigenfunctions"]),
            eigenvalues=np.asarray(d["eigenvalues"]),
            weights=Weights.from_dict(d["weights"]),
            explained_fraction=float(d["explained_fraction"]),
        )


def _unstack(vec: np.ndarray, grid: np.ndarray) -> MixedObservation:
    q = grid.size
    return MixedObservation(
        x_star=Curve.from_samples(grid, vec[:q]),
        v=Curve.from_samples(grid, vec[q:2 * q]),
        f0=float(vec[-2]),
        f1_tilde=float(vec[-1]),
    )


def fit_mfpca(sample: list[MixedObservation], weights: Weights,
              var_threshold: float = 0.9) -> MfpcaModel:
    """Eigendecomposition of the weighted sample covariance.

    Works on stacked grid vectors with the square root of the metric folded
    in, so ordinary SVD yields weight-orthonormal eigenfunctions whose score
    variances are the eigenvalues. Components are kept up to the smallest
    number explaining at least ``var_threshold`` of the total.
    """
    if len(sample) < 2:
        raise InvalidInput("need at least 2 observations")
    if not 0 < var_threshold <= 1:
        raise InvalidInput("variance threshold must be in (0, 1]")
    grid = weights.grid
    stacked = np.stack([stack_observation(z, grid) for z in sample])
    mean = stacked.mean(axis=0)
    centered = stacked - mean
    root_metric = np.sqrt(weights.metric())
    scaled = centered * root_metric / np.sqrt(len(sample) - 1)
    _, singular, vt = np.linalg.svd(scaled, full_matrices=False)
    # numerical rank: singular values at the float-noise floor carry nothing
    keep = singular > max(singular[0], 1e-300) * 1e-12
    eigenvalues = singular[keep] ** 2
    basis = vt[keep] / root_metric[None, :]

    total = float(eigenvalues.sum())
    cumulative = np.cumsum(eigenvalues) / total
    if var_threshold >= 1.0:
        n_keep = eigenvalues.size
    else:
        n_keep = int(np.searchsorted(cumulative, var_threshold - 1e-12) + 1)
    eigenvalues = eigenvalues[:n_keep]
    basis = basis[:n_keep]
    # deterministic sign: the largest-magnitude coordinate is positive
    for row in basis:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0

    return MfpcaModel(
        truncation_time=float(grid[-1]),
        grid=grid,
        mean=mean,
        eigenfunctions=basis,
        eigenvalues=eigenvalues,
        weights=weights,
        explained_fraction=float(cumulative[n_keep - 1]),
    )


def project(model: MfpcaModel, z: MixedObservation) -> np.ndarray:
    """Scores of an observation: weighted inner products with the
    eigenfunctions after centering."""
    vec = stack_observation(z, model.grid) - model.mean
    return (model.eigenfunctions * model.weights.metric()[None, :]) @ vec


def reconstruct(model: MfpcaModel, scores) -> MixedObservation:
    """Mean plus the score-weighted sum of eigenfunctions, component-wise."""
    scores = np.asarray(scores, dtype=float)
    if scores.size != model.n_components:
        raise InvalidInput(
            f"expected {model.n_components} scores, got {scores.size}")
    vec = model.mean + scores @ model.eigenfunctions
    return _unstack(vec, model.grid)
