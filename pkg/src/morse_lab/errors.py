"""Exception types raised by the lab."""


class MorseLabError(Exception):
    """Base class for all lab errors."""


class OffManifold(MorseLabError):
    pass


class RankDeficient(MorseLabError):
    pass


class RetractionDiverged(MorseLabError):
    pass


class FixedSetNotFinite(MorseLabError):
    pass


class NotCritical(MorseLabError):
    pass


class DegenerateHessian(MorseLabError):
    pass


class NonFiniteCrit(MorseLabError):
    pass


class StepCollapse(MorseLabError):
    pass


class LimitUndetermined(MorseLabError):
    pass


class SaddleShadowing(MorseLabError):
    pass


class IndexGapUnsupported(MorseLabError):
    pass


class ResolutionInsufficient(MorseLabError):
    pass


class FramePropagationDiverged(MorseLabError):
    pass


class ConfigError(MorseLabError):
    pass


# Raised inside a pipeline when a theorem hypothesis fails; maps to exit code 2.
HYPOTHESIS_ERRORS = (DegenerateHessian, FixedSetNotFinite, NonFiniteCrit)
