"""Exception hierarchy.

Every error carries a ``category`` used by the command-line driver to pick
an exit code and to label the run manifest.
"""


class SsmFlowError(Exception):
    category = "internal"


class ConfigError(SsmFlowError):
    """Invalid configuration; ``violations`` lists every problem found."""

    category = "config"

    def __init__(self, message, violations=None, line=None, column=None):
        super().__init__(message)
        self.violations = list(violations or [message])
        self.line = line
        self.column = column


class DimensionError(SsmFlowError, ValueError):
    category = "solver"


class DegenerateGridError(DimensionError):
    pass


class SolverError(SsmFlowError):
    category = "solver"


class NoConvergenceError(SolverError):
    """Newton iteration exhausted its budget.

    The last iterate and its residual norm are kept for inspection.
    """

    def __init__(self, message, last=None, residual=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.iterations = iterations


class FactorizationError(SolverError):
    pass


class BranchStallError(SolverError):
    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch


class EigenError(SsmFlowError):
    category = "eigen"


class ShiftError(EigenError):
    pass


class SplitError(EigenError):
    pass


class ResonanceError(SsmFlowError):
    category = "resonance"


class CrossResonanceError(ResonanceError):
    def __init__(self, message, alpha=None, matched=None):
        super().__init__(message)
        self.alpha = alpha
        self.matched = matched


class IllConditionedError(ResonanceError):
    pass


class MissingOrderError(ResonanceError):
    pass


class UnsupportedDimensionError(SsmFlowError, ValueError):
    category = "solver"


class FiniteTimeEscapeError(SolverError):
    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


class SerializationError(SsmFlowError):
    category = "io"


EXIT_CODES = {
    "config": 2,
    "solver": 3,
    "eigen": 4,
    "resonance": 5,
    "io": 6,
    "internal": 1,
}
