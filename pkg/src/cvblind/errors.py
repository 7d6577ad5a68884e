"""Exception types raised by the toolkit.

All of them derive from :class:`ValueError` so callers that only care about
"bad input" can catch that.
"""


class InvalidConstellationError(ValueError):
    pass


class TruncationError(ValueError):
    """Fock cutoff too small for the requested tail tolerance."""


class IllConditionedStateError(ValueError):
    pass


class UnphysicalStateError(ValueError):
    """Covariance matrix violates the uncertainty principle."""


class NoPositiveRateError(ValueError):
    pass


class CalibrationError(ValueError):
    """Shot-noise reference is not above the thermal reference."""


class DegenerateInputError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass
