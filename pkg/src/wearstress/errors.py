"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: usage/configuration problems exit 1,
data or format problems exit 2, internal invariant violations exit 3.
"""


class WearstressError(Exception):
    """Base class for every error raised by this package."""


class UsageError(WearstressError):
    """Bad flags, invalid configuration, or a missing input artifact."""


class DataFormatError(WearstressError):
    """Malformed or inconsistent on-disk data."""


class InsufficientDataError(WearstressError):
    """Not enough samples to compute the requested quantity."""


class RejectionError(WearstressError):
    """Input rejected by a quality gate (e.g. too much missing data)."""


class EpochRejectedError(WearstressError):
    """An epoch could not be featurized; carries the reason."""


class DivergenceError(WearstressError):
    """Iterative training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StratificationError(WearstressError):
    """A class is too small for the requested stratified split."""


class InvariantViolation(WearstressError):
    """An internal contract failed; indicates a bug, not bad input."""
