"""Exception and warning types shared across the package.

Every warning category carries a short machine-readable ``code`` so the
pipeline can collect warnings into its report without parsing messages.
"""


class NrbaError(Exception):
    """Base class for all errors raised by the package."""


class SchemaError(NrbaError):
    pass


class ParseError(NrbaError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class CellError(NrbaError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateResponseError(NrbaError):
    pass


class SingularFitError(NrbaError):
    pass


class PerfectFitError(NrbaError):
    """Raised when a linear AIC would be -inf because the residual sum of squares is zero."""


class UnseenLevelError(NrbaError):
    def __init__(self, column, level):
        super().__init__(f"column {column!r} has level {level!r} not seen when fitting")
        self.column = column
        self.level = level


class InsufficientDataError(NrbaError):
    pass


class DegenerateProxyError(NrbaError):
    pass


class VarianceUndefinedError(NrbaError):
    pass


class InfeasibleError(NrbaError):
    pass


class PipelineError(NrbaError):
    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class NrbaWarning(UserWarning):
    code = "W000"


class SeparationWarning(NrbaWarning):
    code = "W_SEPARATION"


class ConvergenceWarning(NrbaWarning):
    code = "W_NONCONVERGENCE"


class RankDeficiencyWarning(NrbaWarning):
    code = "W_RANK_DEFICIENT"


class SkippedTermWarning(NrbaWarning):
    code = "W_TERM_SKIPPED"


class DegenerateStrataWarning(NrbaWarning):
    code = "W_DEGENERATE_STRATA"


class EmptyStratumWarning(NrbaWarning):
    code = "W_EMPTY_STRATUM"


class ClampWarning(NrbaWarning):
    code = "W_PROB_CLAMPED"


class WeakProxyWarning(NrbaWarning):
    code = "W_WEAK_PROXY"


class SignFlipWarning(NrbaWarning):
    code = "W_PROXY_SIGN_FLIPPED"


class SmallGroupWarning(NrbaWarning):
    code = "W_GROUP_SKIPPED"


class UnstableSimulationWarning(NrbaWarning):
    code = "W_FEW_REPLICATES"


class ZeroVarianceWarning(NrbaWarning):
    code = "W_ZERO_VARIANCE"


class RakingWarning(NrbaWarning):
    code = "W_RAKING_NONCONVERGENCE"


class VacuousBiasWarning(NrbaWarning):
    code = "W_BIAS_VACUOUS"
