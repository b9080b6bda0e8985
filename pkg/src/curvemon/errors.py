"""Exception and warning types shared across the package."""


class CurvemonError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(CurvemonError):
    """Arguments violate a documented precondition."""


class InsufficientData(InvalidInput):
    """Too few observations for the requested fit."""


class DomainError(CurvemonError):
    """Evaluation point or function domain outside the allowed interval."""


class DegenerateNorm(CurvemonError):
    """Sup-norm of an identically zero curve was requested."""


class InfeasibleGrid(CurvemonError):
    """Warping-grid bounds are empty at every stage."""


class NoFeasiblePath(CurvemonError):
    """No monotone path with finite cost exists on the alignment grid."""


class BandInfeasible(CurvemonError):
    """The band constraint leaves no candidate endpoint at this point."""


class NotMonotone(CurvemonError):
    """A warping function is not strictly increasing."""


class InvalidWarping(CurvemonError):
    """Warping boundary values are inconsistent (F1 <= F0)."""


class InvalidAlpha(InvalidInput):
    """Type-I error probability outside (0, 1)."""


class VersionMismatch(InvalidInput):
    """Persisted artifact schema does not match this library version."""


class CurvemonWarning(UserWarning):
    """Base class for warnings emitted by this package."""


class DegenerateComponentWarning(CurvemonWarning):
    """A variance component was floored to keep weights finite."""


class DegenerateSampleWarning(CurvemonWarning):
    """A sample with zero spread was passed to a density routine."""


class NoPhaseVariationWarning(CurvemonWarning):
    """Smoothing-parameter selection found no phase variation to trade off."""
