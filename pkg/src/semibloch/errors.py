"""Exception hierarchy.

Numerical-validity failures (gap closure, symplectic degeneracy, aliasing,
...) derive from :class:`NumericalValidityError` so the CLI can map them to a
single exit code.
"""


class SemiBlochError(Exception):
    """Base class for all package errors."""


class ConfigError(SemiBlochError, ValueError):
    """Malformed scenario, potential or observable specification."""


class DegenerateLatticeError(ConfigError):
    pass


class InvalidFluxError(ConfigError):
    pass


class UnsupportedDimensionError(ConfigError):
    pass


class NumericalValidityError(SemiBlochError):
    """A computation left its regime of validity."""


class EigensolverError(NumericalValidityError):
    pass


class GapClosureError(NumericalValidityError):
    pass


class GridTooCoarseError(NumericalValidityError):
    pass


class DegenerateDenominatorError(NumericalValidityError):
    pass


class NonQuantizedError(NumericalValidityError):
    pass


class SymplecticDegeneracyError(NumericalValidityError):
    pass


class TruncatedTrajectoryError(NumericalValidityError):
    """Raised mid-integration; ``partial`` holds the trajectory so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class AliasingError(NumericalValidityError):
    pass


class GridAlignmentError(NumericalValidityError):
    pass


class WidthError(NumericalValidityError):
    pass


class DomainError(NumericalValidityError):
    pass


class InstabilityError(NumericalValidityError):
    pass


class InconsistencyError(NumericalValidityError):
    pass
