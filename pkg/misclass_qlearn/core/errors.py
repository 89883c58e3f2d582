"""Exception hierarchy shared by all modules.

Each family carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class MisclassQLearnError(Exception):
    """Base class for all package errors."""

    exit_code: int = 3


class ConfigError(MisclassQLearnError):
    """Invalid configuration, detected before any computation."""

    exit_code = 1


class DataError(MisclassQLearnError, ValueError):
    """Input data violates a documented precondition."""

    exit_code = 2


class NumericalError(MisclassQLearnError):
    """A fit or evaluation could not be carried out numerically."""

    exit_code = 3


class MonotonicityError(DataError):
    """Misclassification rates with gamma10 + gamma01 >= 1 or outside [0, 1)."""


class DimensionError(DataError):
    """Vector or matrix dimensions do not match."""


class MissingCovariateError(DataError):
    """A trajectory lacks a covariate named by a design column."""

    def __init__(self, index: int, column: str, missing: str):
        self.index = index
        self.column = column
        self.missing = missing
        super().__init__(
            f"Trajectory {index}: column '{column}' needs '{missing}', which is not recorded"
        )


class ZeroVarianceError(DataError):
    """A column selected for standardization is constant."""


class CsvFormatError(DataError):
    """A CSV file cannot be mapped onto trajectories."""


class MissingCounterfactualError(DataError):
    """Prediction metrics were requested without a counterfactual generator."""


class RankDeficiencyError(NumericalError):
    """A design matrix does not have full column rank."""

    def __init__(self, rank: int, columns: int):
        self.rank = rank
        self.columns = columns
        super().__init__(f"Design matrix is rank deficient (rank {rank} < {columns} columns)")


class NonFiniteLikelihoodError(NumericalError):
    """A log-likelihood argument underflowed while clamping was disabled."""


class IdentifiabilityError(NumericalError):
    """The misclassification rates cannot be estimated from the supplied data."""


class EstimationError(NumericalError):
    """A Q-learning stage fit failed; annotated with stage and method."""

    def __init__(self, stage: int, method: str, cause: Exception):
        self.stage = stage
        self.method = method
        self.cause = cause
        super().__init__(f"Stage {stage} fit ({method}) failed: {cause}")


class BootstrapError(NumericalError):
    """Too many bootstrap refits failed."""


class BootstrapRefitError(NumericalError):
    """A single bootstrap refit did not converge."""
