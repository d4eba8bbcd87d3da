"""Exception hierarchy shared across the package."""


class C3RError(Exception):
    """Base class for all package errors."""


class DimensionError(C3RError):
    """Array shapes do not satisfy an operation's contract."""


class NumericError(C3RError):
    """A computation produced or received non-finite values."""


class ContractError(C3RError):
    """A call violated a documented precondition (empty batch, stale cache, ...)."""


class DegenerateTableError(C3RError):
    """A causal table has zero mass where a conditional or ratio is required."""


class IdentifiabilityError(C3RError):
    """Identification assumptions (exogeneity / monotonicity) do not hold."""


class ConsistencyError(C3RError):
    """A counterfactual specification disagrees with its stated marginals."""


class ConfigError(C3RError):
    """Invalid user-supplied configuration."""


class DivergenceError(C3RError):
    """Training produced a non-finite loss; carries the last good model."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
