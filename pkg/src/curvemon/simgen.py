"""Synthetic misaligned-curve generator with controlled out-of-control shifts.

In-control curves are a random fraction of a five-bump amplitude shape,
observed through a random time warp plus white noise. Two warp families are
supported: a quadratic one (S1) and a sinusoidally perturbed one (S2), at
three misalignment levels (M1 > M2 > M3). Out-of-control behaviour starts at
a fixed fraction of the run: a linear amplitude ramp (Shift B), a warp
perturbation with a domain extension (Shift A), or both (Shift C), each at
severity d.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .curves import SampledCurve
from .errors import InvalidInput

# misalignment presets: (sigma_a, sigma_b, sigma_e, sigma_end, sigma_be,
# mu_end, mu_a)
TABLE_MISALIGNMENT = {
    "M1": dict(sigma_a=0.15, sigma_b=0.2, sigma_e=0.2, sigma_end=0.25,
               sigma_be=0.01, mu_end=10.0, mu_a=1.0),
    "M2": dict(sigma_a=0.15, sigma_b=0.05, sigma_e=0.2, sigma_end=0.0625,
               sigma_be=0.0025, mu_end=10.0, mu_a=1.0),
    "M3": dict(sigma_a=0.15, sigma_b=0.025, sigma_e=0.2, sigma_end=0.03125,
               sigma_be=0.00125, mu_end=10.0, mu_a=1.0),
}

# shift presets per (scenario, shift, onset fraction):
# (delta_g, delta_h2, delta_end), each times the severity d
TABLE_SHIFT = {
    ("S1", "A", 0.3): (0.0, 1.0, 2.0),
    ("S1", "B", 0.3): (20.0, 0.0, 0.0),
    ("S1", "C", 0.3): (10.0, 0.5, 1.0),
    ("S1", "A", 0.6): (0.0, 1.5, 4.0),
    ("S1", "B", 0.6): (80.0, 0.0, 0.0),
    ("S1", "C", 0.6): (40.0, 0.75, 2.0),
    ("S2", "A", 0.3): (0.0, 1.5, 2.0),
    ("S2", "B", 0.3): (20.0, 0.0, 0.0),
    ("S2", "C", 0.3): (10.0, 0.75, 1.0),
    ("S2", "A", 0.6): (0.0, 2.0, 4.0),
    ("S2", "B", 0.6): (80.0, 0.0, 0.0),
    ("S2", "C", 0.6): (40.0, 1.0, 2.0),
}

MONOTONE_BOUND = {"S1": 1.0, "S2": 0.367}


@dataclass(frozen=True)
class GenConfig:
    scenario: str = "S1"
    misalignment: str = "M1"
    sigma_a: float = 0.15
    sigma_b: float = 0.2
    sigma_e: float = 0.2
    sigma_end: float = 0.25
    sigma_be: float = 0.01
    mu_end: float = 10.0
    mu_a: float = 1.0
    shift: str | None = None
    d: float = 0.0
    x_star_out: float = 0.3
    seed: int = 0
    n_points: int = 100

    def __post_init__(self):
        if self.scenario not in ("S1", "S2"):
            raise InvalidInput(f"unknown scenario {self.scenario!r}")
        if self.misalignment not in TABLE_MISALIGNMENT:
            raise InvalidInput(f"unknown misalignment {self.misalignment!r}")
        if self.shift is not None and self.shift not in ("A", "B", "C"):
            raise InvalidInput(f"unknown shift {self.shift!r}")
        if (self.shift is None) != (self.d == 0.0):
            raise InvalidInput("severity d must be positive exactly when a "
                               "shift is requested")
        if self.shift is not None and self.x_star_out not in (0.3, 0.6):
            raise InvalidInput("change fraction must be 0.3 or 0.6")
        for name in ("sigma_a", "sigma_b", "sigma_end", "sigma_be", "mu_end",
                     "mu_a"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"{name} must be positive")
        if self.sigma_e < 0:
            raise InvalidInput("sigma_e must be nonnegative")
        if self.n_points < 4:
            raise InvalidInput("need at least 4 points per curve")

    @classmethod
    def from_preset(cls, preset: str, **overrides) -> "GenConfig":
        """Build from a name like "S1-M2"; keyword overrides win."""
        try:
            scenario, misalignment = preset.split("-")
            table = TABLE_MISALIGNMENT[misalignment]
        except (ValueError, KeyError):
            raise InvalidInput(f"unknown preset {preset!r}") from None
        fields = dict(scenario=scenario, misalignment=misalignment, **table)
        fields.update(overrides)
        return cls(**fields)

    def shift_deltas(self) -> tuple[float, float, float]:
        if self.shift is None:
            return 0.0, 0.0, 0.0
        key = (self.scenario, self.shift, self.x_star_out)
        g, h2, end = TABLE_SHIFT[key]
        return g * self.d, h2 * self.d, end * self.d


def amplitude(t, a_i: float):
    """Five-bump amplitude shape scaled by a_i, for t in [0, 1]."""
    t = np.asarray(t, dtype=float)
    value = a_i * (
        15.0 * np.exp(-20.0 * (t - 0.7) ** 2)
        - 5.0 * np.exp(-50.0 * (t - 0.45) ** 2)
        + 6.0 * np.exp(-100.0 * (t - 0.3) ** 2)
        - 6.0 * np.exp(-150.0 * (t - 0.2) ** 2)
        + 5.0 * np.exp(-200.0 * (t - 0.15) ** 2)
    )
    return value if value.ndim else float(value)


def _base_shape(scenario: str, u, b_i: float):
    """The inverse warp as a function of the normalized position u."""
    u = np.asarray(u, dtype=float)
    if scenario == "S1":
        out = u + b_i * u * (u - 1.0)
    else:
        out = u + b_i * (u * (u - 1.0) - 0.2 * np.sin(3.0 * np.pi * u) ** 2)
    return out


def warp_inverse(scenario: str, x, t_i: float, t_bi: float, t_ei: float,
                 b_i: float):
    """Inverse warping: observed time on [0, T] to amplitude time."""
    if abs(b_i) >= MONOTONE_BOUND[scenario]:
        raise InvalidInput(
            f"|b|={abs(b_i):g} violates the monotonicity bound for {scenario}")
    x = np.asarray(x, dtype=float)
    u = x * (t_ei - t_bi) / t_i + t_bi
    out = _base_shape(scenario, u, b_i)
    return out if out.ndim else float(out)


def _solve_endpoint(scenario: str, b_i: float, target: float,
                    tol: float = 1e-10) -> float:
    """Invert the base shape: u in [0, 1] with shape(u) = target, truncating
    targets outside the attainable range [0, 1]."""
    if target <= 0.0:
        return 0.0
    if target >= 1.0:
        return 1.0
    if b_i == 0.0:
        return float(target)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _base_shape(scenario, mid, b_i) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CurveParams:
    """Realized randomness of one generated curve."""

    t_i: float
    a_i: float
    b_i: float
    t_bi: float
    t_ei: float
    x_out: float = np.nan
    t_out: float = np.nan
    t_i_out: float = np.nan


def _draw_params(config: GenConfig, rng: np.random.Generator) -> CurveParams:
    t_i = rng.normal(config.mu_end, config.sigma_end)
    a_i = rng.normal(config.mu_a, config.sigma_a)
    b_i = rng.normal(0.0, config.sigma_b)
    bound = MONOTONE_BOUND[config.scenario]
    while abs(b_i) >= bound:
        b_i *= 0.95
    s_i = rng.normal(0.05, config.sigma_be)
    e_i = rng.normal(0.95, config.sigma_be)
    t_bi = _solve_endpoint(config.scenario, b_i, s_i)
    t_ei = _solve_endpoint(config.scenario, b_i, e_i)
    return CurveParams(t_i=float(t_i), a_i=float(a_i), b_i=float(b_i),
                       t_bi=float(t_bi), t_ei=float(t_ei))


def _curve_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(n)]


def draw_ic_detailed(config: GenConfig,
                     n: int) -> list[tuple[SampledCurve, CurveParams]]:
    """In-control curves together with their realized parameters."""
    if config.shift is not None:
        raise InvalidInput("in-control draws require shift=None")
    out = []
    for rng in _curve_streams(config.seed, n):
        p = _draw_params(config, rng)
        xs = np.linspace(0.0, p.t_i, config.n_points)
        t = warp_inverse(config.scenario, xs, p.t_i, p.t_bi, p.t_ei, p.b_i)
        values = amplitude(t, p.a_i) + rng.normal(0.0, config.sigma_e,
                                                  config.n_points)
        out.append((SampledCurve(xs, values), p))
    return out


def draw_ic(config: GenConfig, n: int) -> list[SampledCurve]:
    return [c for c, _ in draw_ic_detailed(config, n)]


def _oc_inverse_warp(config: GenConfig, p: CurveParams, xs: np.ndarray,
                     delta_h2: float) -> np.ndarray:
    """Inverse warp with the post-onset perturbation and domain extension."""
    u_out = config.x_star_out             # normalized position at the onset
    delta_h1 = delta_h2 / (1.0 + u_out)   # (d2 - d2*u)/(1 - u^2)
    delta_h3 = delta_h2 * u_out - delta_h1 * u_out**2
    before = xs < p.x_out
    t = np.empty_like(xs)
    t[before] = warp_inverse(config.scenario, xs[before], p.t_i, p.t_bi,
                             p.t_ei, p.b_i)
    x_late = xs[~before]
    stretched = p.t_i * ((x_late - p.x_out) / (p.t_i_out - p.x_out)
                         * (1.0 - p.x_out / p.t_i) + p.x_out / p.t_i)
    u = stretched * (p.t_ei - p.t_bi) / p.t_i + p.t_bi
    t[~before] = (_base_shape(config.scenario, u, p.b_i)
                  + u**2 * delta_h1 - u * delta_h2 + delta_h3)
    return t


def _with_onset(config: GenConfig, p: CurveParams,
                delta_end: float) -> CurveParams:
    x_out = (config.x_star_out - p.t_bi) / (p.t_ei - p.t_bi) * p.t_i
    t_out = _base_shape(config.scenario, config.x_star_out, p.b_i)
    return replace(p, x_out=float(x_out), t_out=float(t_out),
                   t_i_out=float(p.t_i + delta_end))


def draw_oc_detailed(config: GenConfig,
                     n: int) -> list[tuple[SampledCurve, CurveParams]]:
    """Out-of-control curves; the randomness matches the in-control stream of
    the same seed, so a vanishing severity reproduces the in-control draw."""
    if config.shift is None or config.d <= 0:
        raise InvalidInput("out-of-control draws require a shift and d > 0")
    delta_g, delta_h2, delta_end = config.shift_deltas()
    out = []
    for rng in _curve_streams(config.seed, n):
        p = _with_onset(config, _draw_params(config, rng), delta_end)
        # the warp perturbation can defeat the slope margin for extreme
        # draws; shrink b like the in-control rule until the scan passes
        scan = np.linspace(0.0, p.t_i_out, 1000)
        while np.any(np.diff(_oc_inverse_warp(config, p, scan, delta_h2)) <= 0):
            shrunk = replace(p, b_i=0.95 * p.b_i)
            shrunk = replace(
                shrunk,
                t_bi=_solve_endpoint(config.scenario, shrunk.b_i,
                                     _base_shape(config.scenario, p.t_bi, p.b_i)),
                t_ei=_solve_endpoint(config.scenario, shrunk.b_i,
                                     _base_shape(config.scenario, p.t_ei, p.b_i)))
            p = _with_onset(config, shrunk, delta_end)
        xs = np.linspace(0.0, p.t_i_out, config.n_points)
        t = _oc_inverse_warp(config, p, xs, delta_h2)
        values = amplitude(t, p.a_i)
        ramp = t >= p.t_out
        values[ramp] += delta_g * (t[ramp] - p.t_out)
        values += rng.normal(0.0, config.sigma_e, config.n_points)
        out.append((SampledCurve(xs, values), p))
    return out


def draw_oc(config: GenConfig, n: int) -> list[SampledCurve]:
    return [c for c, _ in draw_oc_detailed(config, n)]
