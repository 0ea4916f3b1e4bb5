"""Exception hierarchy shared by every module."""


class EigmotionError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMatrix(EigmotionError, ValueError):
    """Input is not a finite, real, square matrix of dimension >= 2."""


class DimensionMismatch(EigmotionError, ValueError):
    pass


class InvalidDimension(EigmotionError, ValueError):
    pass


class DegenerateSpectrum(EigmotionError):
    """Two eigenvalues are closer than the degeneracy tolerance.

    The first- and second-order variation formulas divide by eigenvalue gaps,
    so they are meaningless at this instant.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class IllConditionedBasis(EigmotionError):
    """Right-eigenvector matrix too ill-conditioned to invert reliably."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class PairingError(EigmotionError):
    """Non-real eigenvalue without a conjugate partner within tolerance."""


class OutOfDomain(EigmotionError, ValueError):
    pass


class InvalidWindow(EigmotionError, ValueError):
    pass


class NonMonotoneGrid(EigmotionError, ValueError):
    pass


class NotCirculant(EigmotionError, ValueError):
    pass


class InvalidParams(EigmotionError, ValueError):
    pass


class MatrixClassMismatch(EigmotionError, ValueError):
    """Caller declared a matrix class (normal, circulant) the data does not satisfy."""


class MatchingAmbiguous(EigmotionError):
    """Two distinct assignments between consecutive spectra have equal cost."""

    def __init__(self, message, t_lo=None, t_hi=None):
        super().__init__(message)
        self.t_lo = t_lo
        self.t_hi = t_hi


class ConfigError(EigmotionError, ValueError):
    pass


class RealEigenvalue(EigmotionError, ValueError):
    """A conjugate-pair quantity was requested for a real eigenvalue."""
