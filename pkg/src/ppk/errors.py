"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`PPKError`.
Failures of the numerical machinery additionally derive from
:class:`NumericalError`, which the CLI maps to exit code 2.
"""


class PPKError(Exception):
    """Base class for all package errors."""


class NumericalError(PPKError):
    """A factorization, fit or solve failed numerically."""


class InvalidInput(PPKError, ValueError):
    """Malformed arguments (shapes, ranges, flags)."""


class DimensionMismatch(InvalidInput):
    pass


class InvalidK(InvalidInput):
    pass


class DuplicateCutoff(InvalidInput):
    pass


class EmptyRegion(InvalidInput):
    pass


class SingleClass(InvalidInput):
    pass


class TooFewSamples(InvalidInput):
    pass


class ZeroCoefficient(InvalidInput):
    pass


class NoAdjustableDimension(InvalidInput):
    pass


class UnknownSetup(InvalidInput):
    pass


class CapExceeded(InvalidInput):
    pass


class MalformedCsv(InvalidInput):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class Separation(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class RegionError(PPKError):
    """Wraps a per-region failure with the region index attached."""

    def __init__(self, region: int, cause: Exception):
        self.region = region
        self.cause = cause
        super().__init__(f"region {region}: {cause}")
