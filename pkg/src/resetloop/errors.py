"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2), analysis
failures (3) and simulation divergence (4).
"""


class ResetLoopError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(ResetLoopError):
    exit_code = 2


class AnalysisError(ResetLoopError):
    exit_code = 3


class DivergenceError(ResetLoopError):
    exit_code = 4


class PoleOnAxis(AnalysisError):
    pass


class DegreeOverflow(AnalysisError):
    pass


class ImproperTransferFunction(AnalysisError):
    pass


class NonFinite(AnalysisError):
    pass


class SingularTustin(AnalysisError):
    pass


class SingularKernel(AnalysisError):
    pass


class DivergentSensitivity(AnalysisError):
    pass


class NoCrossing(AnalysisError):
    pass


class DegenerateFirstHarmonic(AnalysisError):
    pass


class NonIntegerPeriods(AnalysisError):
    pass


class EmptyResetSet(AnalysisError):
    pass


class UnstableBLS(AnalysisError):
    pass


class ConstraintViolation(ConfigError):
    pass


class DegenerateAngle(AnalysisError):
    pass


class NonFiniteState(DivergenceError):
    pass
