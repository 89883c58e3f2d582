"""Q-learning for a binary final outcome: validation-only, naive and corrected estimators.

The outcome stage is fit by logistic regression (or the corrected likelihood);
earlier stages regress the pseudo-outcome max_a logit Q on their history by
least squares. Decisions follow the sign of the fitted blip.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Literal, Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from misclass_qlearn.core.design import StageDesign, build_design_rows
from misclass_qlearn.core.errors import (
    DataError,
    DimensionError,
    EstimationError,
    MisclassQLearnError,
    MissingCounterfactualError,
)
from misclass_qlearn.core.glm import fit_logistic, fit_ols
from misclass_qlearn.core.mislik import (
    IdentifiabilityReport,
    MisLikParams,
    MleFit,
    MleOptions,
    OutcomeData,
    check_identifiability,
    fit_mle,
    outcome_data,
)
from misclass_qlearn.core.types import (
    MisclassRates,
    Regime,
    StageModel,
    StudyDataset,
    Trajectory,
    sign_rule,
)
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)


class Method(str, Enum):
    """Estimator of the outcome-stage Q-function."""

    VALIDATION_ONLY = "validation_only"
    NAIVE = "naive"
    MLE_CORRECTED = "mle_corrected"


def q2_probability(
    h20: ArrayLike, h21: ArrayLike, a2: int, stage2: StageModel
) -> float:
    """Outcome-stage Q-function expit(beta' h20 + (psi' h21) a2)."""
    x0 = np.asarray(h20, dtype=float).reshape(-1)
    x1 = np.asarray(h21, dtype=float).reshape(-1)
    if x0.size != stage2.n_treatment_free or x1.size != stage2.n_blip:
        raise DimensionError(
            f"History sizes ({x0.size}, {x1.size}) do not match model "
            f"({stage2.n_treatment_free}, {stage2.n_blip})"
        )
    if a2 not in (-1, 1):
        raise DataError(f"Treatment must be -1 or +1, got {a2}")
    return float(expit(stage2.beta @ x0 + (stage2.psi @ x1) * a2))


def optimal_action(psi: ArrayLike, h_blip: ArrayLike) -> int:
    """+1 when psi' h > 0, otherwise -1."""
    p = np.asarray(psi, dtype=float).reshape(-1)
    h = np.asarray(h_blip, dtype=float).reshape(-1)
    if p.size != h.size:
        raise DimensionError(f"psi has {p.size} entries but the blip history has {h.size}")
    return sign_rule(float(p @ h))


def pseudo_outcome(stage2: StageModel, h20: ArrayLike, h21: ArrayLike) -> float:
    """max over a2 of logit Q2, which is beta' h20 + |psi' h21|."""
    x0 = np.asarray(h20, dtype=float).reshape(-1)
    x1 = np.asarray(h21, dtype=float).reshape(-1)
    if x0.size != stage2.n_treatment_free or x1.size != stage2.n_blip:
        raise DimensionError(
            f"History sizes ({x0.size}, {x1.size}) do not match model "
            f"({stage2.n_treatment_free}, {stage2.n_blip})"
        )
    return float(stage2.beta @ x0 + abs(stage2.psi @ x1))


def _pseudo_outcomes(
    design: StageDesign, beta: NDArray[np.float64], psi: NDArray[np.float64]
) -> NDArray[np.float64]:
    return design.treatment_free @ beta + np.abs(design.blip @ psi)


@dataclass(frozen=True)
class QLearnSpec:
    """
    Column layout of the stage models.

    ``outcome_stage`` is the stage whose Q-function models the binary outcome:
    stage 2 in a two-stage problem, the single decision otherwise.
    ``first_stage`` is set only in two-stage problems.
    """

    outcome_stage: StageModel
    first_stage: StageModel | None = None

    @property
    def is_two_stage(self) -> bool:
        return self.first_stage is not None

    @property
    def outcome_stage_index(self) -> int:
        return 2 if self.is_two_stage else 1


@dataclass(frozen=True, eq=False)
class QLearnData:
    """Index-aligned inputs of a Q-learning fit, built once and resampled by row."""

    outcome: OutcomeData
    first: StageDesign | None = None

    @property
    def n_validation(self) -> int:
        return self.outcome.n_validation

    @property
    def n_rows(self) -> int:
        return self.outcome.n_rows

    def take(self, validation_rows: ArrayLike, main_rows: ArrayLike) -> QLearnData:
        v = np.asarray(validation_rows, dtype=np.intp)
        m = np.asarray(main_rows, dtype=np.intp)
        first = None if self.first is None else self.first.take(np.concatenate([v, m]))
        return QLearnData(self.outcome.take(v, m), first)


def prepare_data(dataset: StudyDataset, spec: QLearnSpec) -> QLearnData:
    """
    Build the design matrices of every stage.

    Raises:
        DataError: the dataset's stage count does not match the model
        MissingCovariateError: a configured column is not recorded
    """
    if dataset.total_count and dataset.is_two_stage != spec.is_two_stage:
        kind = "two-stage" if dataset.is_two_stage else "one-stage"
        raise DataError(f"A {kind} dataset does not match this model specification")
    outcome = outcome_data(dataset, spec.outcome_stage, spec.outcome_stage_index)
    first = None
    if spec.first_stage is not None:
        first = build_design_rows(dataset, spec.first_stage, 1)
    return QLearnData(outcome, first)


@dataclass(frozen=True)
class QLearnOptions:
    """
    Estimation options.

    ``fixed_rates`` turns the corrected estimator into a sensitivity fit at
    known rates. ``init`` warm-starts the corrected likelihood. ``diagnose``
    runs the identifiability checks after a corrected fit.
    """

    fixed_rates: MisclassRates | None = None
    mle: MleOptions = field(default_factory=MleOptions)
    init: MisLikParams | None = None
    diagnose: bool = True


@dataclass(frozen=True, eq=False)
class QLearnFit:
    """Fitted stage models of one Q-learning run."""

    method: Method
    stage2: StageModel
    stage1: StageModel | None = None
    converged: bool = True
    separation_flag: bool = False
    mle_diagnostics: MleFit | None = None
    gamma_estimates: MisclassRates | None = None
    identifiability: IdentifiabilityReport | None = None

    @property
    def flags(self) -> tuple[str, ...]:
        """Failed identifiability checks of a corrected fit; empty otherwise."""
        return () if self.identifiability is None else self.identifiability.flags

    @property
    def is_two_stage(self) -> bool:
        return self.stage1 is not None

    def psi_vector(self) -> NDArray[np.float64]:
        """Blip coefficients, outcome stage first."""
        parts = [self.stage2.psi]
        if self.stage1 is not None:
            parts.append(self.stage1.psi)
        return np.concatenate(parts)

    def psi_labels(self) -> list[str]:
        if self.stage1 is None:
            return [f"psi1{k}" for k in range(self.stage2.n_blip)]
        return [f"psi2{k}" for k in range(self.stage2.n_blip)] + [
            f"psi1{k}" for k in range(self.stage1.n_blip)
        ]

    def regime(self) -> Regime:
        if self.stage1 is None:
            return Regime((self.stage2,))
        return Regime((self.stage1, self.stage2))


def fit_qlearning(
    dataset: StudyDataset,
    spec: QLearnSpec,
    method: Method | str,
    options: QLearnOptions | None = None,
) -> QLearnFit:
    """
    Fit Q-learning with the given outcome-stage estimator.

    ``naive`` fits the outcome stage on surrogate outcomes over all rows,
    ``validation_only`` on true outcomes over the validation rows, and
    ``mle_corrected`` maximizes the corrected likelihood over all rows.
    Stage 1 regresses the pseudo-outcome on all rows, or on the validation
    rows for ``validation_only``.

    Raises:
        EstimationError: a stage fit failed (wraps the cause)
    """
    return fit_prepared(prepare_data(dataset, spec), spec, method, options)


def fit_prepared(
    data: QLearnData,
    spec: QLearnSpec,
    method: Method | str,
    options: QLearnOptions | None = None,
) -> QLearnFit:
    """fit_qlearning on already-built design matrices."""
    method = Method(method)
    options = options or QLearnOptions()
    stage = spec.outcome_stage_index
    n_beta = spec.outcome_stage.n_treatment_free
    mle_fit: MleFit | None = None
    gamma_estimates: MisclassRates | None = None
    separation = False

    try:
        if method is Method.MLE_CORRECTED:
            mle_options = options.mle
            if options.fixed_rates is not None:
                mle_options = replace(mle_options, fixed_rates=options.fixed_rates)
            mle_fit = fit_mle(data.outcome, options.init, mle_options)
            beta2, psi2 = mle_fit.params.beta, mle_fit.params.psi
            converged = mle_fit.converged
            if options.fixed_rates is None:
                gamma_estimates = mle_fit.rates_estimate()
        else:
            outcome = data.outcome
            if method is Method.NAIVE:
                glm = fit_logistic(outcome.design.full, outcome.surrogate)
            else:
                rows = slice(0, outcome.n_validation)
                glm = fit_logistic(outcome.design.full[rows], outcome.true_outcome)
            beta2, psi2 = glm.coefficients[:n_beta], glm.coefficients[n_beta:]
            converged = glm.converged
            separation = glm.separation_flag
    except MisclassQLearnError as e:
        raise EstimationError(stage, method.value, e) from e
    stage2 = spec.outcome_stage.with_coefficients(beta2, psi2)

    stage1: StageModel | None = None
    if spec.first_stage is not None and data.first is not None:
        rows = data.n_validation if method is Method.VALIDATION_ONLY else data.n_rows
        outcome_rows = data.outcome.design.take(np.arange(rows))
        pseudo = _pseudo_outcomes(outcome_rows, stage2.beta, stage2.psi)
        first = data.first.take(np.arange(rows))
        try:
            coefficients = fit_ols(first.full, pseudo)
        except MisclassQLearnError as e:
            raise EstimationError(1, method.value, e) from e
        n_beta1 = spec.first_stage.n_treatment_free
        stage1 = spec.first_stage.with_coefficients(
            coefficients[:n_beta1], coefficients[n_beta1:]
        )

    identifiability: IdentifiabilityReport | None = None
    if mle_fit is not None and options.diagnose:
        identifiability = check_identifiability(data.outcome, mle_fit.rates, mle_fit.params)

    if separation:
        logger.warning(f"{method.value}: outcome-stage logistic fit shows separation")
    return QLearnFit(
        method=method,
        stage2=stage2,
        stage1=stage1,
        converged=bool(converged),
        separation_flag=separation,
        mle_diagnostics=mle_fit,
        gamma_estimates=gamma_estimates,
        identifiability=identifiability,
    )


@dataclass(frozen=True)
class PredictionMetrics:
    """Regime accuracy and outcome classification quality on a test set."""

    regime_accuracy_stage2: float
    regime_accuracy_stage1: float
    regime_accuracy_both: float
    outcome_error_rate: float
    sensitivity: float
    specificity: float

    def to_dict(self) -> dict[str, float]:
        return {
            "accuracy_stage1": self.regime_accuracy_stage1,
            "accuracy_stage2": self.regime_accuracy_stage2,
            "accuracy_both": self.regime_accuracy_both,
            "error_rate": self.outcome_error_rate,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
        }


CounterfactualGenerator = Callable[[Trajectory, int, float], Mapping[str, float]]


class PredictionTruth(Protocol):
    """Data-generating model needed to score an estimated regime."""

    @property
    def stage2(self) -> StageModel: ...

    @property
    def stage1_blip(self) -> StageModel: ...

    @property
    def counterfactual(self) -> CounterfactualGenerator | None: ...


OutcomeReference = Literal["true_probability", "realized"]


def _decisions(design: StageDesign, psi: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.where(design.blip @ psi > 0, 1.0, -1.0)


def _probabilities(design: StageDesign, model: StageModel) -> NDArray[np.float64]:
    eta = design.treatment_free @ model.beta + (design.blip @ model.psi) * design.treatment
    return np.asarray(expit(eta))


def evaluate_predictions(
    fit: QLearnFit,
    truth: PredictionTruth,
    test_data: StudyDataset,
    rng: np.random.Generator,
    reference: OutcomeReference = "true_probability",
) -> PredictionMetrics:
    """
    Score an estimated two-stage regime against the data-generating model.

    Stage 1 decisions are compared on the stage-1 history and stage 2
    decisions on the observed stage-2 history; both-stage accuracy is the
    joint agreement. Outcomes are then evaluated on a counterfactual stage-2
    history under the estimated first decision, following the estimated
    second decision: the prediction is I(p_hat > 0.5) and the reference is
    I(p_true > 0.5) or, with ``reference="realized"``, a Bernoulli draw.

    Raises:
        MissingCounterfactualError: ``truth`` has no counterfactual generator
        DataError: the fit or the test data is not two-stage
    """
    if truth.counterfactual is None:
        raise MissingCounterfactualError(
            "Prediction metrics need a generator for counterfactual stage-2 covariates"
        )
    if fit.stage1 is None or not test_data.is_two_stage:
        raise DataError("Prediction metrics are defined for two-stage regimes and test data")
    n = test_data.total_count
    if n == 0:
        raise DataError("Test data is empty")

    est_stage1 = build_design_rows(test_data, fit.stage1, 1)
    true_stage1 = build_design_rows(test_data, truth.stage1_blip, 1)
    est_a1 = _decisions(est_stage1, fit.stage1.psi)
    agree1 = est_a1 == _decisions(true_stage1, truth.stage1_blip.psi)

    est_stage2 = build_design_rows(test_data, fit.stage2, 2)
    true_stage2 = build_design_rows(test_data, truth.stage2, 2)
    agree2 = _decisions(est_stage2, fit.stage2.psi) == _decisions(true_stage2, truth.stage2.psi)
    agree_both = agree1 & agree2

    draws = rng.random(n)
    counterfactual = StudyDataset(
        tuple(
            replace(
                traj,
                treatment1=int(a1),
                stage2_covariates=dict(truth.counterfactual(traj, int(a1), float(u))),
            )
            for traj, a1, u in zip(test_data.trajectories, est_a1, draws, strict=True)
        )
    )
    est_cf = build_design_rows(counterfactual, fit.stage2, 2)
    est_a2 = _decisions(est_cf, fit.stage2.psi)
    est_cf = StageDesign(est_cf.treatment_free, est_cf.blip, est_a2)
    true_cf = build_design_rows(counterfactual, truth.stage2, 2)
    true_cf = StageDesign(true_cf.treatment_free, true_cf.blip, est_a2)

    predicted = _probabilities(est_cf, fit.stage2) > 0.5
    p_true = _probabilities(true_cf, truth.stage2)
    if reference == "realized":
        actual = rng.random(n) < p_true
    else:
        actual = p_true > 0.5

    positives = int(np.sum(actual))
    negatives = n - positives
    sensitivity = float(np.sum(predicted & actual) / positives) if positives else float("nan")
    specificity = float(np.sum(~predicted & ~actual) / negatives) if negatives else float("nan")
    return PredictionMetrics(
        regime_accuracy_stage2=float(np.mean(agree2)),
        regime_accuracy_stage1=float(np.mean(agree1)),
        regime_accuracy_both=float(np.mean(agree_both)),
        outcome_error_rate=float(np.mean(predicted != actual)),
        sensitivity=sensitivity,
        specificity=specificity,
    )
