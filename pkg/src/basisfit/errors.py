"""Exception types raised across the fitting pipeline.

Everything derives from BasisFitError so callers can fence off numerical
failures from ordinary bugs with a single except clause.  The CLI maps
GridFormatError/ConfigError to exit code 1 and the remaining subclasses
(fit-time numerical failures) to exit code 2.
"""


class BasisFitError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(BasisFitError):
    """A Cholesky pivot fell at or below the underflow guard.

    Usually means the normal matrix is rank deficient and the ridge term
    was zero (or vanishingly small).
    """

    def __init__(self, pivot_index: int, pivot: float | None = None):
        self.pivot_index = pivot_index
        self.pivot = pivot
        detail = f" (pivot {pivot:.3e})" if pivot is not None else ""
        super().__init__(
            f"matrix is not positive definite at pivot index {pivot_index}{detail}"
        )


class DimensionMismatch(BasisFitError):
    """Array shapes do not agree with the operation's contract."""


class NonPositiveDepth(BasisFitError):
    """A depth value was zero, negative, or non-finite where a metric depth is required."""


class EmptySparseSet(BasisFitError):
    """No sparse samples were provided; a fit is impossible."""


class PixelOutOfRange(BasisFitError):
    """A pixel id does not address a cell of the target grid."""


class ScaleOutOfRange(BasisFitError):
    """Requested pyramid scale does not exist."""


class KinkProximity(BasisFitError):
    """A standardized residual sits too close to the Huber kink.

    The reverse-mode gradient is one-sided there and cannot be trusted
    against a central-difference check; callers typically redraw the
    instance or jitter the threshold.
    """


class CapViolation(BasisFitError):
    """Scene construction could not place all depths inside (a, depth_cap]."""


class NoEligiblePixels(BasisFitError):
    """The sampler found no pixels to draw from (or was asked for zero samples)."""


class NoValidPixels(BasisFitError):
    """Metric evaluation masked out every pixel."""


class GridFormatError(BasisFitError):
    """A grid file is malformed: bad magic, bad dtype code, wrong payload length,
    or non-finite values."""


class ConfigError(BasisFitError):
    """A config file failed validation (unknown keys, bad values, duplicate seeds)."""
