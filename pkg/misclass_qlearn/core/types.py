"""Domain types: trajectories, datasets, misclassification rates and stage models.

All types are immutable after construction and safe to share across threads.

Documented (untestable) assumptions of the estimators built on these types:
stable unit treatment value, no unmeasured confounders, and positivity of the
outcome probability. Misclassification is non-differential: the surrogate
depends on the true outcome only.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
from numpy.typing import ArrayLike, NDArray

from misclass_qlearn.core.errors import DataError, DimensionError, MonotonicityError

INTERCEPT = "1"
TREATMENTS = (-1, 1)
# Rate sums within this of 1 count as 1.
MONOTONICITY_TOLERANCE = 1e-12


def sign_rule(blip_value: float) -> int:
    """Return +1 when the blip is strictly positive, otherwise -1 (ties go to -1)."""
    return 1 if blip_value > 0 else -1


@dataclass(frozen=True)
class MisclassRates:
    """Misclassification rates gamma10 = P(Y*=1 | Y=0) and gamma01 = P(Y*=0 | Y=1)."""

    gamma10: float = 0.0
    gamma01: float = 0.0

    def __post_init__(self) -> None:
        for name in ("gamma10", "gamma01"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or not 0.0 <= value < 1.0:
                raise MonotonicityError(f"{name} must lie in [0, 1), got {value}")
            object.__setattr__(self, name, value)
        if self.gamma10 + self.gamma01 >= 1.0 - MONOTONICITY_TOLERANCE:
            raise MonotonicityError(
                f"gamma10 + gamma01 must be < 1 (monotonicity), got "
                f"{self.gamma10} + {self.gamma01} = {self.gamma10 + self.gamma01}"
            )

    @property
    def is_zero(self) -> bool:
        """True when the surrogate equals the true outcome."""
        return self.gamma10 == 0.0 and self.gamma01 == 0.0

    @property
    def margin(self) -> float:
        """Distance of gamma10 + gamma01 below 1."""
        return 1.0 - self.gamma10 - self.gamma01

    def as_tuple(self) -> tuple[float, float]:
        return (self.gamma10, self.gamma01)


@dataclass(frozen=True)
class Trajectory:
    """One patient's covariates, treatments and outcomes across one or two stages."""

    stage1_covariates: Mapping[str, float]
    treatment1: int
    stage2_covariates: Mapping[str, float] = field(default_factory=dict)
    treatment2: int | None = None
    true_outcome: int | None = None
    surrogate_outcome: int | None = None

    def __post_init__(self) -> None:
        if self.true_outcome is None and self.surrogate_outcome is None:
            raise DataError("Trajectory needs a true outcome, a surrogate outcome, or both")
        for name in ("true_outcome", "surrogate_outcome"):
            value = getattr(self, name)
            if value is not None and value not in (0, 1):
                raise DataError(f"{name} must be 0 or 1, got {value}")
        if self.treatment1 not in TREATMENTS:
            raise DataError(f"treatment1 must be -1 or +1, got {self.treatment1}")
        if self.treatment2 is None:
            if self.stage2_covariates:
                raise DataError("One-stage trajectories cannot carry stage-2 covariates")
        elif self.treatment2 not in TREATMENTS:
            raise DataError(f"treatment2 must be -1 or +1, got {self.treatment2}")

        object.__setattr__(
            self,
            "stage1_covariates",
            MappingProxyType({k: float(v) for k, v in self.stage1_covariates.items()}),
        )
        object.__setattr__(
            self,
            "stage2_covariates",
            MappingProxyType({k: float(v) for k, v in self.stage2_covariates.items()}),
        )

    @property
    def is_two_stage(self) -> bool:
        return self.treatment2 is not None

    def history(self, stage: int) -> dict[str, float]:
        """
        Variables available when deciding the treatment at a stage.

        Stage 1 sees the stage-1 covariates. Stage 2 additionally sees the
        first treatment (as ``A1``) and the stage-2 covariates.
        """
        if stage == 1:
            return dict(self.stage1_covariates)
        if stage == 2:
            if not self.is_two_stage:
                raise DataError("Stage-2 history requested for a one-stage trajectory")
            merged = dict(self.stage1_covariates)
            merged["A1"] = float(self.treatment1)
            merged.update(self.stage2_covariates)
            return merged
        raise DataError(f"Stage must be 1 or 2, got {stage}")

    def treatment(self, stage: int) -> int:
        if stage == 1:
            return self.treatment1
        if self.treatment2 is None:
            raise DataError("Stage-2 treatment requested for a one-stage trajectory")
        return self.treatment2


@dataclass(frozen=True)
class StudyDataset:
    """
    Trajectories split into a validation subset and a main-study subset.

    The first ``validation_count`` trajectories form the validation subset
    (true and surrogate outcomes both recorded); the rest form the main study
    (surrogate only; any true outcome there is ignored).
    """

    trajectories: tuple[Trajectory, ...]
    validation_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        n = len(self.trajectories)
        if not 0 <= self.validation_count <= n:
            raise DataError(f"validation_count must lie in [0, {n}], got {self.validation_count}")
        for i, traj in enumerate(self.trajectories):
            if i < self.validation_count:
                if traj.true_outcome is None or traj.surrogate_outcome is None:
                    raise DataError(
                        f"Validation trajectory {i} needs both true and surrogate outcomes"
                    )
            elif traj.surrogate_outcome is None:
                raise DataError(f"Main-study trajectory {i} needs a surrogate outcome")
        stage_counts = {t.is_two_stage for t in self.trajectories}
        if len(stage_counts) > 1:
            raise DataError("Dataset mixes one-stage and two-stage trajectories")

    @property
    def total_count(self) -> int:
        return len(self.trajectories)

    @property
    def main_count(self) -> int:
        return self.total_count - self.validation_count

    @property
    def is_two_stage(self) -> bool:
        return bool(self.trajectories) and self.trajectories[0].is_two_stage

    @property
    def validation(self) -> tuple[Trajectory, ...]:
        return self.trajectories[: self.validation_count]

    @property
    def main(self) -> tuple[Trajectory, ...]:
        return self.trajectories[self.validation_count :]

    def surrogate_outcomes(self) -> NDArray[np.float64]:
        return np.array([t.surrogate_outcome for t in self.trajectories], dtype=float)

    def true_outcomes(self) -> NDArray[np.float64]:
        """True outcomes of the validation subset."""
        return np.array([t.true_outcome for t in self.validation], dtype=float)

    def __len__(self) -> int:
        return self.total_count

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)


@dataclass(frozen=True)
class ColumnSpec:
    """
    One design column: the intercept, a history variable, or a product of them.

    Parsed from text: ``"1"`` is the intercept, ``"X1"`` a variable and
    ``"Z1*A1"`` a product.
    """

    factors: tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str | ColumnSpec) -> ColumnSpec:
        if isinstance(text, ColumnSpec):
            return text
        parts = [p.strip() for p in str(text).split("*")]
        if any(not p for p in parts):
            raise DataError(f"Malformed column specifier: '{text}'")
        factors = tuple(p for p in parts if p != INTERCEPT)
        return cls(factors)

    @property
    def is_intercept(self) -> bool:
        return not self.factors

    @property
    def label(self) -> str:
        return INTERCEPT if self.is_intercept else "*".join(self.factors)

    def evaluate(self, history: Mapping[str, float]) -> float:
        """Value of this column for one history; raises KeyError naming the missing variable."""
        value = 1.0
        for name in self.factors:
            value *= history[name]
        return value

    def __str__(self) -> str:
        return self.label


def parse_columns(columns: Sequence[str | ColumnSpec]) -> tuple[ColumnSpec, ...]:
    return tuple(ColumnSpec.parse(c) for c in columns)


@dataclass(frozen=True, eq=False)
class StageModel:
    """Treatment-free and blip columns of one stage with their coefficients."""

    treatment_free_columns: tuple[ColumnSpec, ...]
    blip_columns: tuple[ColumnSpec, ...]
    beta: NDArray[np.float64]
    psi: NDArray[np.float64]

    def __post_init__(self) -> None:
        tf_columns = parse_columns(self.treatment_free_columns)
        object.__setattr__(self, "treatment_free_columns", tf_columns)
        object.__setattr__(self, "blip_columns", parse_columns(self.blip_columns))
        beta = np.array(self.beta, dtype=float).reshape(-1)
        psi = np.array(self.psi, dtype=float).reshape(-1)
        if beta.size != len(self.treatment_free_columns):
            raise DimensionError(
                f"beta has {beta.size} entries for {len(self.treatment_free_columns)} "
                "treatment-free columns"
            )
        if psi.size != len(self.blip_columns):
            raise DimensionError(
                f"psi has {psi.size} entries for {len(self.blip_columns)} blip columns"
            )
        beta.flags.writeable = False
        psi.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_names(
        cls,
        treatment_free: Sequence[str | ColumnSpec],
        blip: Sequence[str | ColumnSpec],
        beta: ArrayLike | None = None,
        psi: ArrayLike | None = None,
    ) -> StageModel:
        """Build a model from column names; coefficients default to zero."""
        tf = parse_columns(treatment_free)
        bl = parse_columns(blip)
        return cls(
            tf,
            bl,
            np.zeros(len(tf)) if beta is None else np.asarray(beta, dtype=float),
            np.zeros(len(bl)) if psi is None else np.asarray(psi, dtype=float),
        )

    def with_coefficients(self, beta: ArrayLike, psi: ArrayLike) -> StageModel:
        return StageModel(self.treatment_free_columns, self.blip_columns, beta, psi)

    @property
    def n_treatment_free(self) -> int:
        return len(self.treatment_free_columns)

    @property
    def n_blip(self) -> int:
        return len(self.blip_columns)

    @property
    def n_parameters(self) -> int:
        return self.n_treatment_free + self.n_blip

    def blip_value(self, history: Mapping[str, float]) -> float:
        h1 = np.array([c.evaluate(history) for c in self.blip_columns])
        return float(self.psi @ h1)


@dataclass(frozen=True)
class Regime:
    """
    Estimated decision rules, one per stage (index 0 is stage 1).

    The decision at a stage depends on the history only through the blip
    columns: a = +1 if psi' h1 > 0, else -1.
    """

    stages: tuple[StageModel, ...]

    def decide(self, stage: int, history: Mapping[str, float]) -> int:
        return sign_rule(self.stages[stage - 1].blip_value(history))

    def describe(self, stage: int = 1, symbol: str = "â") -> str:
        """Render the rule, e.g. ``â = 1 if -0.148 + 0.130·Diabetes > 0, else -1``."""
        model = self.stages[stage - 1]
        terms: list[str] = []
        for column, coef in zip(model.blip_columns, model.psi, strict=True):
            magnitude = f"{abs(coef):.3f}"
            body = magnitude if column.is_intercept else f"{magnitude}·{column.label}"
            if not terms:
                terms.append(f"-{body}" if coef < 0 else body)
            else:
                terms.append(f"- {body}" if coef < 0 else f"+ {body}")
        return f"{symbol} = 1 if {' '.join(terms)} > 0, else -1"
