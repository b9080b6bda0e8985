"""Real-time monitoring for functional quality characteristics.

Registration of partially observed curves against a template, mixed
functional principal component analysis over amplitude and phase, and
T2/SPE control charting, with a synthetic-data generator and an
FAR/TDR evaluation harness.
"""

__version__ = "0.1.0"

from . import curves, mfpca, monitoring, pipeline, realtime, registration, simgen
from .curves import Curve, SampledCurve, fit_smooth, sup_norm
from .errors import CurvemonError
from .pipeline import Phase1Artifacts, PipelineConfig, phase1, phase2
from .simgen import GenConfig, draw_ic, draw_oc

__all__ = [
    "Curve",
    "CurvemonError",
    "GenConfig",
    "Phase1Artifacts",
    "PipelineConfig",
    "SampledCurve",
    "curves",
    "draw_ic",
    "draw_oc",
    "fit_smooth",
    "mfpca",
    "monitoring",
    "phase1",
    "phase2",
    "pipeline",
    "realtime",
    "registration",
    "simgen",
    "sup_norm",
    "__version__",
]
