"""End-to-end orchestration: reference-sample estimation and live monitoring.

The estimation phase smooths the reference curves, fits the template and the
warping-penalty weight, builds the band constraint from full-curve
registrations, replays every training curve through the real-time
registration, fits one mixed-component model per truncation time, and turns
the tuning-set statistics into control limits. The monitoring phase replays
new curves through the identical code path.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .curves import Curve, SampledCurve, fit_smooth
from .errors import CurvemonError, InvalidInput, VersionMismatch
from .mfpca import DEFAULT_K, fit_mfpca, fit_weights, to_mixed
from .monitoring import (
    ControlScheme,
    MonitoringResult,
    MonitorSettings,
    TraceRecord,
    far_tdr,
    fit_limits,
    monitor,
    pointwise_limits,
    pointwise_monitor,
    trace_curve,
)
from .realtime import (
    Band,
    RelaxationParams,
    fit_band,
    impute_complete,
    registered_curve,
)
from .registration import RegistrationParams, oeb_fdtw, procrustes_template, select_lambda

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """All tunable knobs of the two phases."""

    # smoothing of raw samples
    smoothing_penalty: object = "auto"
    # registration solver
    s_min: float = 0.01
    s_max: float = 1000.0
    n_t: int = 100
    m_x: int = 50
    refinement_rounds: int = 3
    realtime_refinement_rounds: int = 0
    alpha_grid: tuple = (0.0, 0.5, 1.0)
    # template and penalty selection
    procrustes_iterations: int = 2
    lambda_grid: tuple = (0.0, 0.01, 0.1, 1.0, 10.0)
    acd_delta: float = 0.01
    lambda_subsample: int = 50   # curves used for the penalty search
    # band constraint
    band_level: float = 0.01
    relax: RelaxationParams = RelaxationParams()
    # mixed-component models
    k_constants: tuple = DEFAULT_K
    var_threshold: float = 0.9
    family_size: int = 50
    family_min_fraction: float = 0.05
    # monitoring
    alpha: float = 0.05
    monitor_points: int = 50
    monitor_start_fraction: float = 0.05
    min_curve_points: int = 5
    min_tuning_values: int = 20
    seed: int = 0

    def registration_params(self, lam: float = 0.0,
                            slope_target=None) -> RegistrationParams:
        return RegistrationParams(
            lam=lam, s_min=self.s_min, s_max=self.s_max, n_t=self.n_t,
            m_x=self.m_x, refinement_rounds=self.refinement_rounds,
            alpha_grid=tuple(self.alpha_grid), slope_target=slope_target)

    def monitor_settings(self, lam: float,
                         slope_target: float) -> MonitorSettings:
        reg = replace(self.registration_params(lam, slope_target),
                      refinement_rounds=self.realtime_refinement_rounds)
        return MonitorSettings(reg_params=reg, relax=self.relax,
                               smoothing_penalty=self.smoothing_penalty,
                               min_points=self.min_curve_points)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["relax"] = asdict(self.relax)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "relax" in d:
            d["relax"] = RelaxationParams(**d["relax"])
        for name in ("alpha_grid", "lambda_grid", "k_constants"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


@dataclass
class Phase1Artifacts:
    """Everything the monitoring phase needs, persistable as one bundle."""

    template: Curve
    lam: float
    mean_slope: float
    band: Band
    scheme: ControlScheme
    config: PipelineConfig
    pw_lower: np.ndarray
    pw_upper: np.ndarray

    def settings(self) -> MonitorSettings:
        return self.config.monitor_settings(self.lam, self.mean_slope)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "template": self.template.to_dict(),
            "lambda": self.lam,
            "mean_slope": self.mean_slope,
            "band": self.band.to_dict(),
            "scheme": self.scheme.to_dict(),
            "config": self.config.to_dict(),
            "pw_lower": self.pw_lower.tolist(),
            "pw_upper": self.pw_upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Phase1Artifacts":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise VersionMismatch(
                f"artifact schema {d.get('schema_version')} does not match "
                f"{SCHEMA_VERSION}")
        return cls(
            template=Curve.from_dict(d["template"]),
            lam=float(d["lambda"]),
            mean_slope=float(d["mean_slope"]),
            band=Band.from_dict(d["band"]),
            scheme=ControlScheme.from_dict(d["scheme"]),
            config=PipelineConfig.from_dict(d["config"]),
            pw_lower=np.asarray(d["pw_lower"]),
            pw_upper=np.asarray(d["pw_upper"]),
        )


def save_artifacts(path, artifacts: Phase1Artifacts) -> None:
    Path(path).write_text(json.dumps(artifacts.to_dict(), sort_keys=True,
                                     separators=(",", ":")))


def load_artifacts(path) -> Phase1Artifacts:
    return Phase1Artifacts.from_dict(json.loads(Path(path).read_text()))


def _pick_family_record(records: list[TraceRecord | None],
                        t_g: float) -> TraceRecord | None:
    """The record whose template end point is the smallest one at or past
    t_g, falling back to the furthest-reaching record."""
    best = None
    furthest = None
    for rec in records:
        if rec is None:
            continue
        if furthest is None or rec.t_star > furthest.t_star:
            furthest = rec
        if rec.t_star >= t_g - 1e-12 and (best is None
                                          or rec.t_star < best.t_star):
            best = rec
    return best if best is not None else furthest


def phase1(training: list[SampledCurve], tuning: list[SampledCurve],
           config: PipelineConfig = PipelineConfig()) -> Phase1Artifacts:
    """Estimate the template, penalty, band, model family, and limits from a
    clean reference sample split into a training and a tuning part."""
    if not training or not tuning:
        raise InvalidInput("training and tuning sets must both be nonempty")
    rng = np.random.default_rng(config.seed)

    train_curves = [fit_smooth(s, config.smoothing_penalty) for s in training]
    tune_curves = [fit_smooth(s, config.smoothing_penalty) for s in tuning]

    # monitoring domain: union of the training domains
    left = min(c.domain[0] for c in train_curves)
    right = max(c.domain[1] for c in train_curves)
    start = left + config.monitor_start_fraction * (right - left)
    grid = np.linspace(start, right, config.monitor_points)

    template = procrustes_template(
        train_curves, config.procrustes_iterations, "random-member",
        config.registration_params(), rng=rng)

    subsample = train_curves[: config.lambda_subsample]
    selection = select_lambda(template, subsample, config.lambda_grid,
                              config.acd_delta, config.registration_params())
    lam = selection.value

    full_params = config.registration_params(lam)
    alignments = [oeb_fdtw(template, c, full_params) for c in train_curves]
    mean_slope = float(np.mean([
        (a.warping_knots[-1, 1] - a.warping_knots[0, 1])
        / (a.warping_domain[1] - a.warping_domain[0]) for a in alignments]))
    band = fit_band(alignments, config.band_level, grid, template.domain)

    settings = config.monitor_settings(lam, mean_slope)
    traces = [trace_curve(s, grid, template, band, settings)[0]
              for s in training]

    a_y, b_y = template.domain
    family_start = a_y + config.family_min_fraction * (b_y - a_y)
    family_times = np.linspace(family_start, b_y, config.family_size)
    family = []
    for t_g in family_times:
        observations = []
        for records in traces:
            rec = _pick_family_record(records, t_g)
            if rec is None:
                continue
            try:
                alignment = rec.alignment
                if t_g < alignment.warping_domain[1]:
                    alignment = alignment.truncated(t_g)
                pair = impute_complete(
                    alignment, registered_curve(rec.partial, alignment),
                    template.restrict(a_y, t_g), rec.partial.domain)
                observations.append(to_mixed(pair.warping, pair.registered))
            except CurvemonError:
                continue
        if len(observations) < 3:
            warnings.warn(f"skipping truncation time {t_g:g}: only "
                          f"{len(observations)} usable pairs")
            continue
        weights = fit_weights(observations, k=config.k_constants)
        family.append(fit_mfpca(observations, weights, config.var_threshold))

    if not family:
        raise InvalidInput("no truncation time had enough registered pairs")

    interim = ControlScheme(grid, np.full(grid.size, np.inf),
                            np.full(grid.size, np.inf), config.alpha, family)
    tuning_results = [monitor(s, interim, template, band, settings,
                              curve_id=f"tune-{i}")
                      for i, s in enumerate(tuning)]
    t2_stats = np.stack([r.t2 for r in tuning_results])
    spe_stats = np.stack([r.spe for r in tuning_results])

    # keep only grid points where enough tuning curves produced statistics
    valid = (~np.isnan(t2_stats)).sum(axis=0) >= config.min_tuning_values
    if not valid.any():
        raise InvalidInput("no monitoring grid point has enough tuning "
                           "statistics for limits")
    if not valid.all():
        warnings.warn(f"dropping {int((~valid).sum())} monitoring grid points "
                      "with too few tuning statistics")
    grid = grid[valid]
    t2_limits, spe_limits = fit_limits(t2_stats[:, valid],
                                       spe_stats[:, valid], config.alpha)
    scheme = ControlScheme(grid, t2_limits, spe_limits, config.alpha, family)

    tune_values = np.full((len(tune_curves), grid.size), np.nan)
    for i, curve in enumerate(tune_curves):
        inside = grid <= curve.domain[1] + 1e-12
        tune_values[i, inside] = curve.evaluate(grid[inside])
    pw_lower, pw_upper = pointwise_limits(tune_values, config.alpha)

    return Phase1Artifacts(template=template, lam=lam, mean_slope=mean_slope,
                           band=band, scheme=scheme, config=config,
                           pw_lower=pw_lower, pw_upper=pw_upper)


def phase2(artifacts: Phase1Artifacts, curves: list[SampledCurve],
           change_point_x: float | None = None, pointwise: bool = False,
           curve_ids: list[str] | None = None):
    """Monitor a batch of curves against fitted artifacts.

    Returns the per-curve results and a FAR/TDR summary (None for an empty
    batch). Per-curve failures are isolated into the result notes.
    """
    if curve_ids is None:
        curve_ids = [f"curve-{i}" for i in range(len(curves))]
    results: list[MonitoringResult] = []
    settings = artifacts.settings()
    for cid, samples in zip(curve_ids, curves):
        if pointwise:
            results.append(pointwise_monitor(
                samples, artifacts.scheme.monitoring_grid, artifacts.pw_lower,
                artifacts.pw_upper, curve_id=cid))
        else:
            results.append(monitor(samples, artifacts.scheme,
                                   artifacts.template, artifacts.band,
                                   settings, curve_id=cid))
    if not results:
        return [], None
    far, tdr = far_tdr(results, change_point_x)
    return results, {"far": far, "tdr": tdr,
                     "n_curves": len(results),
                     "change_point_x": change_point_x}
