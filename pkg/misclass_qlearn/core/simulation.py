"""Simulation scenarios, the replication harness and metric aggregation."""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from itertools import product
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.special import expit

from misclass_qlearn.core.bootstrap import bootstrap_ci
from misclass_qlearn.core.design import corrupt_outcomes
from misclass_qlearn.core.errors import (
    BootstrapError,
    DataError,
    MisclassQLearnError,
)
from misclass_qlearn.core.qlearn import (
    CounterfactualGenerator,
    Method,
    PredictionMetrics,
    QLearnSpec,
    evaluate_predictions,
    fit_prepared,
    prepare_data,
)
from misclass_qlearn.core.types import MisclassRates, StageModel, StudyDataset, Trajectory
from misclass_qlearn.utils.logger import get_logger, replication_context
from misclass_qlearn.utils.rng import RandomStreams

logger = get_logger(__name__)

MAX_FAILURE_FRACTION = 0.05
METHOD_ORDER: tuple[Method, ...] = (Method.VALIDATION_ONLY, Method.NAIVE, Method.MLE_CORRECTED)

# Data-generating models. The one-stage outcome is
# expit(1 + 0.5 Z - X + (0.5 - 0.5 X) A).
ONE_STAGE_TRUTH = StageModel.from_names(
    ("1", "Z", "X"), ("1", "X"), beta=(1.0, 0.5, -1.0), psi=(0.5, -0.5)
)
TWO_STAGE_OUTCOME_TRUTH = StageModel.from_names(
    ("1", "X1", "Z1", "A1", "Z1*A1", "X2"),
    ("1", "Z2", "A1"),
    beta=(0.0, 1.0, 0.0, -0.5, 0.0, 1.0),
    psi=(0.25, 0.5, 0.5),
)
# Stage-1 blip implied by the two-stage outcome model. Its treatment-free part has
# no closed form and is not used.
TWO_STAGE_FIRST_BLIP = StageModel.from_names((), ("1", "Z1"), psi=(-0.3688, 0.0187))

TWO_STAGE_FIRST_MODEL = StageModel.from_names(("1", "X1", "Z1"), ("1", "Z1"))

TREATMENT_INTERCEPT, TREATMENT_SLOPE = -0.8, 1.25
X2_INTERCEPT, X2_SLOPE = -0.5, 0.5
Z2_ON_Z1, Z2_ON_A1 = 0.1, 0.1


def one_stage_spec() -> QLearnSpec:
    """Fitted model of the one-stage scenario (correctly specified)."""
    return QLearnSpec(ONE_STAGE_TRUTH.with_coefficients(np.zeros(3), np.zeros(2)))


def two_stage_spec() -> QLearnSpec:
    """Fitted models of the two-stage scenario."""
    return QLearnSpec(
        TWO_STAGE_OUTCOME_TRUTH.with_coefficients(np.zeros(6), np.zeros(3)),
        TWO_STAGE_FIRST_MODEL,
    )


class Scenario(str, Enum):
    ONE_STAGE = "one_stage"
    TWO_STAGE = "two_stage"
    PREDICTIVE = "predictive"


class ScenarioConfig(BaseModel):
    """Settings of one simulation study cell."""

    scenario: Scenario = Scenario.ONE_STAGE
    n: int = Field(default=2000, gt=0, description="Training sample size")
    test_n: int = Field(default=5000, gt=0, description="Test sample size (predictive only)")
    rho: float = Field(default=0.5, gt=0.0, le=1.0, description="Validation ratio")
    gamma10: float = Field(default=0.0, ge=0.0, lt=1.0)
    gamma01: float = Field(default=0.0, ge=0.0, lt=1.0)
    replications: int = Field(default=500, ge=1)
    bootstrap_samples: int = Field(default=0, ge=0, description="0 disables coverage")
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    methods: list[Method] = Field(default_factory=lambda: list(METHOD_ORDER))
    outcome_reference: Literal["true_probability", "realized"] = "true_probability"

    @field_validator("bootstrap_samples")
    @classmethod
    def _enough_bootstrap_samples(cls, value: int) -> int:
        if 0 < value < 50:
            raise ValueError("bootstrap_samples must be 0 (disabled) or at least 50")
        return value

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: list[Method]) -> list[Method]:
        if not value:
            raise ValueError("at least one method is required")
        return [m for m in METHOD_ORDER if m in value]

    @model_validator(mode="after")
    def _consistent(self) -> ScenarioConfig:
        MisclassRates(self.gamma10, self.gamma01)
        if validation_size(self.n, self.rho) < 1:
            raise ValueError(f"rho * n must give at least one validation row (n={self.n})")
        return self

    @property
    def rates(self) -> MisclassRates:
        return MisclassRates(self.gamma10, self.gamma01)

    @property
    def spec(self) -> QLearnSpec:
        return one_stage_spec() if self.scenario is Scenario.ONE_STAGE else two_stage_spec()

    @property
    def truth(self) -> NDArray[np.float64]:
        """Data-generating blip coefficients in the order of QLearnFit.psi_vector()."""
        if self.scenario is Scenario.ONE_STAGE:
            return np.array(ONE_STAGE_TRUTH.psi)
        return np.concatenate([TWO_STAGE_OUTCOME_TRUTH.psi, TWO_STAGE_FIRST_BLIP.psi])

    def label(self) -> str:
        return (
            f"{self.scenario.value} n={self.n} rho={self.rho:g} "
            f"rates=({self.gamma10:g}, {self.gamma01:g})"
        )


class SweepConfig(BaseModel):
    """Lists of settings whose full factorial grid expands one scenario."""

    n: list[int] | None = None
    rho: list[float] | None = None
    rates: list[tuple[float, float]] | None = None


def expand_sweep(config: ScenarioConfig, sweep: SweepConfig | None) -> list[ScenarioConfig]:
    """Every n x rho x rates combination, in that nesting order; all cells share the seed."""
    if sweep is None:
        return [config]
    ns = sweep.n or [config.n]
    rhos = sweep.rho or [config.rho]
    rates = sweep.rates or [(config.gamma10, config.gamma01)]
    base = config.model_dump()
    return [
        ScenarioConfig.model_validate({**base, "n": n, "rho": rho, "gamma10": g10, "gamma01": g01})
        for n, rho, (g10, g01) in product(ns, rhos, rates)
    ]


def _binary_sign(
    rng: np.random.Generator, p: NDArray[np.float64] | float, n: int
) -> NDArray[np.int64]:
    return np.where(rng.random(n) < p, 1, -1)


def generate_one_stage(
    n: int,
    rates: MisclassRates,
    rng: np.random.Generator,
    corruption_rng: np.random.Generator | None = None,
) -> StudyDataset:
    """
    One-decision scenario with every row carrying both outcomes.

    X ~ N(1, 1), P(Z = 1) = 0.5, P(A = 1) = expit(1 - X), and
    Y ~ Bernoulli(expit(1 + 0.5 Z - X + (0.5 - 0.5 X) A)). The surrogate is
    drawn from ``corruption_rng`` (``rng`` when omitted).
    """
    x = rng.normal(1.0, 1.0, n)
    z = _binary_sign(rng, 0.5, n)
    a = _binary_sign(rng, expit(1.0 - x), n)
    eta = (
        ONE_STAGE_TRUTH.beta @ np.vstack([np.ones(n), z, x])
        + (ONE_STAGE_TRUTH.psi @ np.vstack([np.ones(n), x])) * a
    )
    y = (rng.random(n) < expit(eta)).astype(np.int64)
    draws = (rng if corruption_rng is None else corruption_rng).random(n)
    y_star = corrupt_outcomes(y, rates, draws)
    trajectories = tuple(
        Trajectory(
            {"X": float(x[i]), "Z": float(z[i])},
            int(a[i]),
            true_outcome=int(y[i]),
            surrogate_outcome=int(y_star[i]),
        )
        for i in range(n)
    )
    return StudyDataset(trajectories, validation_count=n)


def _z2_probability(z1: NDArray[np.float64] | float, a1: NDArray[np.float64] | float) -> Any:
    return expit(Z2_ON_Z1 * np.asarray(z1) + Z2_ON_A1 * np.asarray(a1))


def generate_two_stage(
    n: int,
    rates: MisclassRates,
    rng: np.random.Generator,
    corruption_rng: np.random.Generator | None = None,
) -> StudyDataset:
    """
    Two-decision scenario with every row carrying both outcomes.

    X1 ~ N(0, 1), X2 ~ N(-0.5 + 0.5 X1, 1), P(A_j = 1) = expit(-0.8 + 1.25 X_j),
    P(Z1 = 1) = 0.5, P(Z2 = 1) = expit(0.1 Z1 + 0.1 A1); the outcome follows
    TWO_STAGE_OUTCOME_TRUTH.
    """
    x1 = rng.normal(0.0, 1.0, n)
    z1 = _binary_sign(rng, 0.5, n)
    a1 = _binary_sign(rng, expit(TREATMENT_INTERCEPT + TREATMENT_SLOPE * x1), n)
    x2 = rng.normal(X2_INTERCEPT + X2_SLOPE * x1, 1.0)
    z2 = _binary_sign(rng, _z2_probability(z1, a1), n)
    a2 = _binary_sign(rng, expit(TREATMENT_INTERCEPT + TREATMENT_SLOPE * x2), n)
    ones = np.ones(n)
    h0 = np.vstack([ones, x1, z1, a1, z1 * a1, x2])
    h1 = np.vstack([ones, z2, a1])
    eta = TWO_STAGE_OUTCOME_TRUTH.beta @ h0 + (TWO_STAGE_OUTCOME_TRUTH.psi @ h1) * a2
    y = (rng.random(n) < expit(eta)).astype(np.int64)
    draws = (rng if corruption_rng is None else corruption_rng).random(n)
    y_star = corrupt_outcomes(y, rates, draws)
    trajectories = tuple(
        Trajectory(
            {"X1": float(x1[i]), "Z1": float(z1[i])},
            int(a1[i]),
            {"X2": float(x2[i]), "Z2": float(z2[i])},
            int(a2[i]),
            true_outcome=int(y[i]),
            surrogate_outcome=int(y_star[i]),
        )
        for i in range(n)
    )
    return StudyDataset(trajectories, validation_count=n)


def two_stage_counterfactual(
    trajectory: Trajectory, treatment1: int, draw: float
) -> dict[str, float]:
    """
    Stage-2 covariates had the first treatment been ``treatment1``.

    X2 does not depend on A1 and is kept; Z2 is kept when the treatment is
    unchanged and otherwise redrawn from its law with the uniform ``draw``.
    """
    observed = dict(trajectory.stage2_covariates)
    if treatment1 == trajectory.treatment1:
        return observed
    p = float(_z2_probability(trajectory.stage1_covariates["Z1"], treatment1))
    observed["Z2"] = 1.0 if draw < p else -1.0
    return observed


@dataclass(frozen=True)
class TwoStageTruth:
    """Data-generating two-stage model used to score estimated regimes."""

    stage2: StageModel = TWO_STAGE_OUTCOME_TRUTH
    stage1_blip: StageModel = TWO_STAGE_FIRST_BLIP
    counterfactual: CounterfactualGenerator | None = two_stage_counterfactual


def validation_size(n: int, rho: float) -> int:
    """round(rho * n), halves rounded up."""
    return int(math.floor(rho * n + 0.5))


def split_validation(dataset: StudyDataset, rho: float, rng: np.random.Generator) -> StudyDataset:
    """
    Randomly keep true outcomes for round(rho * n) rows and blank the rest.

    Validation rows come first; each subset keeps the original row order.
    """
    if not 0.0 < rho <= 1.0:
        raise DataError(f"Validation ratio must lie in (0, 1], got {rho}")
    if dataset.validation_count != dataset.total_count:
        raise DataError("Splitting needs true outcomes on every row")
    n = dataset.total_count
    n_v = validation_size(n, rho)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.permutation(n)[:n_v]] = True
    validation = [t for t, keep in zip(dataset.trajectories, chosen, strict=True) if keep]
    main = [
        replace(t, true_outcome=None)
        for t, keep in zip(dataset.trajectories, chosen, strict=True)
        if not keep
    ]
    return StudyDataset(tuple(validation + main), validation_count=n_v)


@dataclass(frozen=True, eq=False)
class MethodOutcome:
    """Result of one method in one replication."""

    psi: NDArray[np.float64] | None
    separation: bool = False
    covered: NDArray[np.bool_] | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.psi is None


@dataclass(frozen=True, eq=False)
class ReplicationSummary:
    """Monte Carlo bias, empirical SE, RMSE and percentile-interval coverage per parameter."""

    method: Method
    parameters: tuple[str, ...]
    truth: NDArray[np.float64]
    bias: NDArray[np.float64]
    se: NDArray[np.float64]
    rmse: NDArray[np.float64]
    coverage: NDArray[np.float64]
    replications: int
    failure_count: int = 0
    separation_count: int = 0
    failure_exceeded: bool = False

    @property
    def successful(self) -> int:
        return self.replications - self.failure_count


def summarize(
    method: Method,
    parameters: Sequence[str],
    truth: NDArray[np.float64],
    outcomes: Sequence[MethodOutcome],
) -> ReplicationSummary:
    """
    Aggregate per-replication estimates in replication order.

    Failed replications are excluded and counted. Coverage is taken over
    replications with a bootstrap interval, and is NaN when there are none.
    """
    k = len(parameters)
    estimates = np.array([o.psi for o in outcomes if o.psi is not None]).reshape(-1, k)
    failures = sum(o.failed for o in outcomes)
    if estimates.shape[0]:
        errors = estimates - truth
        bias = errors.mean(axis=0)
        rmse = np.sqrt(np.mean(errors**2, axis=0))
    else:
        bias = rmse = np.full(k, np.nan)
    se = estimates.std(axis=0, ddof=1) if estimates.shape[0] > 1 else np.full(k, np.nan)
    covered = [o.covered for o in outcomes if o.covered is not None]
    coverage = np.mean(np.vstack(covered), axis=0) if covered else np.full(k, np.nan)

    exceeded = failures > MAX_FAILURE_FRACTION * len(outcomes)
    if exceeded:
        logger.warning(
            f"{method.value}: {failures} of {len(outcomes)} replications failed "
            f"(more than {MAX_FAILURE_FRACTION:.0%})"
        )
    return ReplicationSummary(
        method=method,
        parameters=tuple(parameters),
        truth=np.asarray(truth, dtype=float),
        bias=bias,
        se=se,
        rmse=rmse,
        coverage=coverage,
        replications=len(outcomes),
        failure_count=failures,
        separation_count=sum(o.separation for o in outcomes),
        failure_exceeded=exceeded,
    )


def generate(config: ScenarioConfig, streams: RandomStreams) -> StudyDataset:
    """Training data of one replication, already split into V and the main study."""
    generator = generate_one_stage if config.scenario is Scenario.ONE_STAGE else generate_two_stage
    full = generator(
        config.n, config.rates, streams.get("generate"), corruption_rng=streams.get("corrupt")
    )
    return split_validation(full, config.rho, streams.get("split"))


def _method_key(method: Method) -> int:
    return METHOD_ORDER.index(method)


def run_replication(
    config: ScenarioConfig, replication: int, methods: Sequence[Method]
) -> dict[Method, MethodOutcome]:
    """Generate, split and fit one replication; reproducible in isolation."""
    streams = RandomStreams(config.seed, replication)
    spec = config.spec
    truth = config.truth
    prepared = prepare_data(generate(config, streams), spec)
    results: dict[Method, MethodOutcome] = {}
    for method in methods:
        try:
            fit = fit_prepared(prepared, spec, method)
        except MisclassQLearnError as e:
            logger.debug(f"Replication {replication} ({method.value}) failed: {e}")
            results[method] = MethodOutcome(None, error=str(e))
            continue
        if not fit.converged:
            results[method] = MethodOutcome(
                None, separation=fit.separation_flag, error="did not converge"
            )
            continue
        covered = None
        if config.bootstrap_samples:
            try:
                interval = bootstrap_ci(
                    prepared,
                    spec,
                    method,
                    config.bootstrap_samples,
                    streams.get("bootstrap", _method_key(method)),
                    level=config.level,
                    point=fit,
                )
                covered = interval.covers(truth)
            except BootstrapError as e:
                logger.debug(f"Replication {replication} ({method.value}): {e}")
        results[method] = MethodOutcome(fit.psi_vector(), fit.separation_flag, covered)
    return results


def _run_parallel(
    task: Callable[[int], Any], replications: int, threads: int
) -> list[Any]:
    def tagged(replication: int) -> Any:
        with replication_context(replication):
            return task(replication)

    if threads <= 1:
        return [tagged(r) for r in range(replications)]
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="replication") as pool:
        return list(pool.map(tagged, range(replications)))


def run_replications(
    config: ScenarioConfig,
    methods: Iterable[Method | str] | None = None,
    threads: int = 1,
) -> dict[Method, ReplicationSummary]:
    """
    Run the Monte Carlo study of a one- or two-stage scenario.

    Replications may run on several threads; results are reduced in
    replication order so the summary does not depend on ``threads``.
    """
    if config.scenario is Scenario.PREDICTIVE:
        raise DataError("Use run_predictive for the predictive scenario")
    selected = _selected_methods(config, methods)
    logger.info(f"Running {config.replications} replications: {config.label()}")
    per_replication = _run_parallel(
        lambda r: run_replication(config, r, selected), config.replications, threads
    )
    labels = _parameter_labels(config)
    return {
        m: summarize(m, labels, config.truth, [rep[m] for rep in per_replication])
        for m in selected
    }


def _selected_methods(
    config: ScenarioConfig, methods: Iterable[Method | str] | None
) -> list[Method]:
    chosen = config.methods if methods is None else [Method(m) for m in methods]
    return [m for m in METHOD_ORDER if m in chosen]


def _parameter_labels(config: ScenarioConfig) -> list[str]:
    if config.scenario is Scenario.ONE_STAGE:
        return [f"psi1{k}" for k in range(ONE_STAGE_TRUTH.n_blip)]
    return [f"psi2{k}" for k in range(TWO_STAGE_OUTCOME_TRUTH.n_blip)] + [
        f"psi1{k}" for k in range(TWO_STAGE_FIRST_BLIP.n_blip)
    ]


@dataclass(frozen=True)
class PredictionSummary:
    """Prediction metrics of one method averaged over replications."""

    method: Method
    metrics: Mapping[str, float]
    replications: int
    failure_count: int = 0
    failure_exceeded: bool = False


def run_predictive_replication(
    config: ScenarioConfig, replication: int, methods: Sequence[Method]
) -> dict[Method, PredictionMetrics | None]:
    streams = RandomStreams(config.seed, replication)
    spec = two_stage_spec()
    truth = TwoStageTruth()
    prepared = prepare_data(generate(config, streams), spec)
    test = generate_two_stage(config.test_n, MisclassRates(), streams.get("test"))
    results: dict[Method, PredictionMetrics | None] = {}
    for method in methods:
        try:
            fit = fit_prepared(prepared, spec, method)
        except MisclassQLearnError as e:
            logger.debug(f"Replication {replication} ({method.value}) failed: {e}")
            results[method] = None
            continue
        if not fit.converged:
            results[method] = None
            continue
        results[method] = evaluate_predictions(
            fit,
            truth,
            test,
            streams.get("evaluate", _method_key(method)),
            reference=config.outcome_reference,
        )
    return results


def run_predictive(
    config: ScenarioConfig,
    methods: Iterable[Method | str] | None = None,
    threads: int = 1,
) -> dict[Method, PredictionSummary]:
    """Train each method on misclassified data and score it on clean test data."""
    if config.scenario is not Scenario.PREDICTIVE:
        raise DataError("run_predictive needs the predictive scenario")
    selected = _selected_methods(config, methods)
    logger.info(f"Running {config.replications} predictive replications: {config.label()}")
    per_replication = _run_parallel(
        lambda r: run_predictive_replication(config, r, selected), config.replications, threads
    )
    summaries: dict[Method, PredictionSummary] = {}
    for method in selected:
        metrics = [rep[method] for rep in per_replication if rep[method] is not None]
        failures = config.replications - len(metrics)
        exceeded = failures > MAX_FAILURE_FRACTION * config.replications
        if exceeded:
            logger.warning(
                f"{method.value}: {failures} of {config.replications} replications failed"
            )
        averaged = {
            key: float(np.nanmean([m.to_dict()[key] for m in metrics])) if metrics else math.nan
            for key in PREDICTION_FIELDS
        }
        summaries[method] = PredictionSummary(
            method, averaged, config.replications, failures, exceeded
        )
    return summaries


PREDICTION_FIELDS: tuple[str, ...] = (
    "accuracy_stage2",
    "accuracy_stage1",
    "accuracy_both",
    "error_rate",
    "sensitivity",
    "specificity",
)
