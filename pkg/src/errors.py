class VerificationError(ValueError):
    """Base class for every error raised by the verification toolkit"""


class ChainInvalid(VerificationError):
    pass


class NonStochasticError(ChainInvalid):
    pass


class DuplicateStateError(ChainInvalid):
    pass


class ReducibleError(ChainInvalid):
    pass


class PeriodicMatrixError(ChainInvalid):
    pass


class BadDistributionError(ChainInvalid):
    pass


class LabelRangeError(ChainInvalid):
    pass


class EigenFailure(VerificationError):
    pass


class TrackingLost(VerificationError):
    pass


class DegenerateError(VerificationError):
    """Asymptotic variance vanishes (coboundary case)"""


class NotCenteredError(VerificationError):
    pass


class InconclusiveNearThreshold(VerificationError):
    """Spectral radius supremum too close to the margin to decide numerically"""


class NotStronglyAperiodic(VerificationError):
    pass


class UnderResolvedError(VerificationError):
    pass


class TooLargeError(VerificationError):
    pass


class DomainMismatch(VerificationError):
    pass


class NoReturnError(VerificationError):
    """No finite number of increments can sum to zero"""


class ConfigInvalid(VerificationError):
    pass
