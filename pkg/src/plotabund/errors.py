"""Exception taxonomy for plotabund.

Every error raised by the library derives from ``PlotabundError`` so callers
can catch the whole family at once.  The simulation harness treats any of
these raised during a replicate as a failed replicate rather than a crash.
"""


class PlotabundError(Exception):
    """Base class for all plotabund errors."""


# -- geometry ---------------------------------------------------------------

class InvalidGeometry(PlotabundError):
    """Degenerate ring, zero-area region, or otherwise unusable geometry."""


class DegenerateHull(PlotabundError):
    """Fewer than three non-collinear points; no convex hull exists."""


class PlotOutsideRegion(PlotabundError):
    """A sampled plot is not fully contained in the study region."""


class EmptyUnsampledRegion(PlotabundError):
    """Plots tile the region; there is no unsampled area to predict into.

    This is a signal, not a defect: callers treat the unsampled total as 0.
    """


# -- knots ------------------------------------------------------------------

class TooFewPoints(PlotabundError):
    """Fewer candidate points than requested cluster count."""


# -- basis ------------------------------------------------------------------

class InvalidRange(PlotabundError):
    """Kernel range is non-positive or violates the coarse > fine ordering."""


# -- glm / fitting ----------------------------------------------------------

class NumericOverflow(PlotabundError):
    """A likelihood or mean evaluation produced a non-finite value."""


class SingularSystem(PlotabundError):
    """Weighted normal system condition number exceeded the threshold."""


class NotConverged(PlotabundError):
    """Iteration budget exhausted before meeting the tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DomainError(PlotabundError):
    """Argument outside the open interval of a bounded transform."""


class NoSignal(PlotabundError):
    """All observed counts are zero; the intensity model is undefined."""


class FitFailure(PlotabundError):
    """Every optimizer vertex failed; no usable fit exists."""


# -- estimator --------------------------------------------------------------

class InsufficientDof(PlotabundError):
    """Residual degrees of freedom are non-positive."""


class InsufficientDataAfterTrim(PlotabundError):
    """Too few plots survive the trim threshold to estimate the covariance."""


# -- simulation -------------------------------------------------------------

class UnsupportedForSRS(PlotabundError):
    """Simple-random-sampling expansion requires equal plot areas."""
