"""Corrected likelihood for a misclassified binary outcome.

The outcome-stage model is P(Y = 1 | H, A) = expit(beta' H0 + (psi' H1) A) and
the surrogate follows P(Y* = 1 | Y = 0) = gamma10, P(Y* = 0 | Y = 1) = gamma01.
Validation rows contribute the joint probability of (Y*, Y); main-study rows
contribute the marginal probability of Y*:

    P(Y* = 1 | H, A) = gamma10 + (1 - gamma10 - gamma01) p.

The rates are optimised on the logit scale so the problem is unconstrained;
gamma10 + gamma01 < 1 is checked after fitting rather than imposed.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, log_expit, logit

from misclass_qlearn.core.design import StageDesign, build_design_rows
from misclass_qlearn.core.errors import (
    DimensionError,
    IdentifiabilityError,
    NonFiniteLikelihoodError,
    RankDeficiencyError,
)
from misclass_qlearn.core.glm import fit_logistic
from misclass_qlearn.core.types import (
    MONOTONICITY_TOLERANCE,
    MisclassRates,
    StageModel,
    StudyDataset,
)
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

LOG_FLOOR = 1e-12
_LOG_FLOOR_VALUE = float(np.log(LOG_FLOOR))
MAX_ITERATIONS = 500
GRADIENT_TOLERANCE = 1e-6
DEFAULT_INIT_RATES = (0.05, 0.05)
CROSS_TABLE_BOUNDS = (0.01, 0.49)
BOUNDARY_PROBABILITY = 1e-6


def surrogate_prob(p_true: float, rates: MisclassRates) -> float:
    """P(Y* = 1) for a true-outcome probability: gamma10 + (1 - gamma10 - gamma01) p."""
    return rates.gamma10 + (1.0 - rates.gamma10 - rates.gamma01) * p_true


@dataclass(frozen=True, eq=False)
class OutcomeData:
    """Outcome-stage design with surrogate outcomes for all rows and true outcomes for V."""

    design: StageDesign
    surrogate: NDArray[np.float64]
    true_outcome: NDArray[np.float64]
    n_validation: int

    def __post_init__(self) -> None:
        n = self.design.n_rows
        if self.surrogate.shape != (n,):
            raise DimensionError(f"Expected {n} surrogate outcomes, got {self.surrogate.shape}")
        if self.true_outcome.shape != (self.n_validation,):
            raise DimensionError(
                f"Expected {self.n_validation} true outcomes, got {self.true_outcome.shape}"
            )

    @property
    def n_rows(self) -> int:
        return self.design.n_rows

    @property
    def n_coefficients(self) -> int:
        return self.design.treatment_free.shape[1] + self.design.blip.shape[1]

    def take(self, validation_rows: ArrayLike, main_rows: ArrayLike) -> OutcomeData:
        """Resample rows; validation indices must lie in V and main indices in the main subset."""
        v = np.asarray(validation_rows, dtype=np.intp)
        m = np.asarray(main_rows, dtype=np.intp)
        rows = np.concatenate([v, m])
        return OutcomeData(
            self.design.take(rows), self.surrogate[rows], self.true_outcome[v], int(v.size)
        )

    def validation_only(self) -> OutcomeData:
        rows = np.arange(self.n_validation)
        return self.take(rows, np.empty(0, dtype=np.intp))


def outcome_data(dataset: StudyDataset, model: StageModel, stage: int) -> OutcomeData:
    """Build the likelihood inputs of the outcome stage from a dataset."""
    return OutcomeData(
        build_design_rows(dataset, model, stage),
        dataset.surrogate_outcomes(),
        dataset.true_outcomes(),
        dataset.validation_count,
    )


@dataclass(frozen=True, eq=False)
class MisLikParams:
    """
    Parameters of the corrected likelihood.

    Rates are stored as logits. With ``fixed_rates`` set, the logits are
    ignored and the rates are constants.
    """

    beta: NDArray[np.float64]
    psi: NDArray[np.float64]
    gamma10_logit: float = float(logit(DEFAULT_INIT_RATES[0]))
    gamma01_logit: float = float(logit(DEFAULT_INIT_RATES[1]))
    fixed_rates: MisclassRates | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).reshape(-1))

    @classmethod
    def from_rates(
        cls,
        beta: ArrayLike,
        psi: ArrayLike,
        gamma10: float,
        gamma01: float,
    ) -> MisLikParams:
        """Free-rate parameters starting at rates strictly inside (0, 1)."""
        return cls(
            np.asarray(beta, dtype=float),
            np.asarray(psi, dtype=float),
            float(logit(gamma10)),
            float(logit(gamma01)),
        )

    @property
    def gamma_fixed(self) -> bool:
        return self.fixed_rates is not None

    @property
    def rates(self) -> tuple[float, float]:
        """Implied (gamma10, gamma01); may violate monotonicity when free."""
        if self.fixed_rates is not None:
            return self.fixed_rates.as_tuple()
        return float(expit(self.gamma10_logit)), float(expit(self.gamma01_logit))

    @property
    def monotonicity_violated(self) -> bool:
        g10, g01 = self.rates
        return g10 + g01 >= 1.0 - MONOTONICITY_TOLERANCE

    def to_vector(self) -> NDArray[np.float64]:
        parts = [self.beta, self.psi]
        if not self.gamma_fixed:
            parts.append(np.array([self.gamma10_logit, self.gamma01_logit]))
        return np.concatenate(parts)

    def with_vector(self, vector: ArrayLike) -> MisLikParams:
        v = np.asarray(vector, dtype=float)
        p0, p1 = self.beta.size, self.psi.size
        expected = p0 + p1 + (0 if self.gamma_fixed else 2)
        if v.size != expected:
            raise DimensionError(f"Parameter vector has {v.size} entries, expected {expected}")
        if self.gamma_fixed:
            return MisLikParams(v[:p0], v[p0 : p0 + p1], fixed_rates=self.fixed_rates)
        return MisLikParams(v[:p0], v[p0 : p0 + p1], float(v[-2]), float(v[-1]))


@dataclass(frozen=True, eq=False)
class LikelihoodValue:
    """Log-likelihood, its gradient and how many log arguments were clamped."""

    value: float
    gradient: NDArray[np.float64]
    clamped: int


def _log_rates(params: MisLikParams) -> tuple[float, float, float, float, float, float]:
    """Rates with logs of (g10, 1-g10, g01, 1-g01); -inf where a fixed rate is 0."""
    if params.fixed_rates is None:
        l10, l01 = params.gamma10_logit, params.gamma01_logit
        return (
            float(expit(l10)),
            float(expit(l01)),
            float(log_expit(l10)),
            float(log_expit(-l10)),
            float(log_expit(l01)),
            float(log_expit(-l01)),
        )
    g10, g01 = params.fixed_rates.as_tuple()
    with np.errstate(divide="ignore"):
        return (
            g10,
            g01,
            float(np.log(g10)),
            float(np.log1p(-g10)),
            float(np.log(g01)),
            float(np.log1p(-g01)),
        )


def evaluate(
    params: MisLikParams, data: OutcomeData, *, clamp: bool = True
) -> LikelihoodValue:
    """
    Evaluate the corrected log-likelihood and its analytic gradient.

    Log arguments below LOG_FLOOR are clamped (their gradient contribution
    is zero) unless ``clamp`` is False, in which case they raise.

    Raises:
        NonFiniteLikelihoodError: a log argument underflowed with clamping disabled
        DimensionError: parameters do not match the design
    """
    design = data.design
    n_beta, n_psi = design.treatment_free.shape[1], design.blip.shape[1]
    if params.beta.size != n_beta or params.psi.size != n_psi:
        raise DimensionError(
            f"Parameters ({params.beta.size}, {params.psi.size}) do not match design columns "
            f"({n_beta}, {n_psi})"
        )
    g10, g01, log_g10, log_1m_g10, log_g01, log_1m_g01 = _log_rates(params)
    a = design.treatment
    blip_a = design.blip * a[:, None]
    eta = design.treatment_free @ params.beta + blip_a @ params.psi
    nv = data.n_validation
    clamped = 0

    # Validation rows: log P(Y* = ys, Y = y) = log P(Y* = ys | Y = y) + log P(Y = y).
    eta_v = eta[:nv]
    ys_v = data.surrogate[:nv]
    y_v = data.true_outcome
    log_p = log_expit(eta_v)
    log_1m_p = log_expit(-eta_v)
    log_outcome = np.where(y_v == 1.0, log_p, log_1m_p)
    log_rate = np.where(
        y_v == 1.0,
        np.where(ys_v == 1.0, log_1m_g01, log_g01),
        np.where(ys_v == 1.0, log_g10, log_1m_g10),
    )
    terms_v = log_outcome + log_rate
    low_v = ~(terms_v >= _LOG_FLOOR_VALUE)
    if np.any(low_v):
        if not clamp:
            raise NonFiniteLikelihoodError(
                f"{int(np.sum(low_v))} validation log-likelihood terms fell below {LOG_FLOOR}"
            )
        clamped += int(np.sum(low_v))
        terms_v = np.where(low_v, _LOG_FLOOR_VALUE, terms_v)
    active_v = ~low_v
    score_eta_v = np.where(active_v, y_v - expit(eta_v), 0.0)

    # Rate scores on the logit scale: d log g / dl = 1 - g, d log(1 - g) / dl = -g.
    d_l10 = d_l01 = 0.0
    if not params.gamma_fixed:
        cell_10 = active_v & (y_v == 0.0) & (ys_v == 1.0)
        cell_00 = active_v & (y_v == 0.0) & (ys_v == 0.0)
        cell_01 = active_v & (y_v == 1.0) & (ys_v == 0.0)
        cell_11 = active_v & (y_v == 1.0) & (ys_v == 1.0)
        d_l10 += np.sum(cell_10) * (1.0 - g10) - np.sum(cell_00) * g10
        d_l01 += np.sum(cell_01) * (1.0 - g01) - np.sum(cell_11) * g01

    # Main-study rows: P(Y* = 1) = g10 (1 - p) + (1 - g01) p, written as a sum of
    # non-negative terms so that both q and 1 - q stay accurate near 0.
    eta_m = eta[nv:]
    ys_m = data.surrogate[nv:]
    p_m = expit(eta_m)
    one_m_p = expit(-eta_m)
    q = g10 * one_m_p + (1.0 - g01) * p_m
    one_m_q = g01 * p_m + (1.0 - g10) * one_m_p
    arg_m = np.where(ys_m == 1.0, q, one_m_q)
    low_m = ~(arg_m >= LOG_FLOOR)
    if np.any(low_m):
        if not clamp:
            raise NonFiniteLikelihoodError(
                f"{int(np.sum(low_m))} main-study log-likelihood terms fell below {LOG_FLOOR}"
            )
        clamped += int(np.sum(low_m))
    safe_arg = np.where(low_m, LOG_FLOOR, arg_m)
    terms_m = np.log(safe_arg)
    # d/dq of ys log q + (1 - ys) log(1 - q)
    dq = np.where(low_m, 0.0, np.where(ys_m == 1.0, 1.0 / safe_arg, -1.0 / safe_arg))
    slope = 1.0 - g10 - g01
    score_eta_m = dq * slope * p_m * one_m_p
    if not params.gamma_fixed:
        d_l10 += float(np.sum(dq * one_m_p)) * g10 * (1.0 - g10)
        d_l01 += float(np.sum(dq * -p_m)) * g01 * (1.0 - g01)

    score_eta = np.concatenate([score_eta_v, score_eta_m])
    gradient_parts = [design.treatment_free.T @ score_eta, blip_a.T @ score_eta]
    if not params.gamma_fixed:
        gradient_parts.append(np.array([d_l10, d_l01]))
    value = float(np.sum(terms_v) + np.sum(terms_m))
    if clamped:
        logger.debug(f"Clamped {clamped} log-likelihood arguments at {LOG_FLOOR}")
    return LikelihoodValue(value, np.concatenate(gradient_parts), clamped)


def log_likelihood(params: MisLikParams, data: OutcomeData, *, clamp: bool = True) -> float:
    """Corrected total log-likelihood over validation and main-study rows."""
    return evaluate(params, data, clamp=clamp).value


def log_likelihood_gradient(
    params: MisLikParams, data: OutcomeData, *, clamp: bool = True
) -> NDArray[np.float64]:
    """Gradient with respect to (beta, psi[, gamma10 logit, gamma01 logit])."""
    return evaluate(params, data, clamp=clamp).gradient


@dataclass(frozen=True)
class MleOptions:
    """Optimizer settings for fit_mle."""

    max_iterations: int = MAX_ITERATIONS
    gradient_tolerance: float = GRADIENT_TOLERANCE
    clamp: bool = True
    fixed_rates: MisclassRates | None = None
    init_rates: tuple[float, float] = DEFAULT_INIT_RATES
    multi_start: bool = True


@dataclass(frozen=True, eq=False)
class MleFit:
    """Result of maximizing the corrected likelihood."""

    params: MisLikParams
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    monotonicity_violated: bool
    starts: int = 1
    clamped: int = 0

    @property
    def rates(self) -> tuple[float, float]:
        return self.params.rates

    def rates_estimate(self) -> MisclassRates | None:
        """Estimated rates, or None when they violate monotonicity."""
        if self.monotonicity_violated:
            return None
        return MisclassRates(*self.params.rates)


def cross_table_rates(data: OutcomeData) -> tuple[float, float]:
    """Initial rates from the validation cross-table, clipped to [0.01, 0.49]."""
    y = data.true_outcome
    ys = data.surrogate[: data.n_validation]
    low, high = CROSS_TABLE_BOUNDS
    n0 = np.sum(y == 0.0)
    n1 = np.sum(y == 1.0)
    g10 = float(np.sum((ys == 1.0) & (y == 0.0)) / n0) if n0 else DEFAULT_INIT_RATES[0]
    g01 = float(np.sum((ys == 0.0) & (y == 1.0)) / n1) if n1 else DEFAULT_INIT_RATES[1]
    return float(np.clip(g10, low, high)), float(np.clip(g01, low, high))


def _start_params(
    coefficients: NDArray[np.float64],
    n_beta: int,
    rates: tuple[float, float],
    fixed: MisclassRates | None,
) -> MisLikParams:
    beta, psi = coefficients[:n_beta], coefficients[n_beta:]
    if fixed is not None:
        return MisLikParams(beta, psi, fixed_rates=fixed)
    return MisLikParams.from_rates(beta, psi, *rates)


def _default_starts(data: OutcomeData, options: MleOptions) -> list[MisLikParams]:
    n_beta = data.design.treatment_free.shape[1]
    full = data.design.full
    starts: list[MisLikParams] = []

    naive = fit_logistic(full, data.surrogate)
    starts.append(
        _start_params(naive.coefficients, n_beta, options.init_rates, options.fixed_rates)
    )

    if data.n_validation > 0:
        try:
            valid = fit_logistic(full[: data.n_validation], data.true_outcome)
        except RankDeficiencyError as e:
            logger.debug(f"Skipping validation-only start: {e}")
        else:
            if not valid.separation_flag:
                starts.append(
                    _start_params(
                        valid.coefficients, n_beta, cross_table_rates(data), options.fixed_rates
                    )
                )
    return starts


def _maximize(start: MisLikParams, data: OutcomeData, options: MleOptions) -> MleFit:
    n = max(data.n_rows, 1)

    def objective(vector: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        result = evaluate(start.with_vector(vector), data, clamp=options.clamp)
        return -result.value / n, -result.gradient / n

    # The internal tolerance is tighter than the reported convergence test so that
    # the solution is accurate to well below the gradient criterion.
    outcome = scipy.optimize.minimize(
        objective,
        start.to_vector(),
        jac=True,
        method="BFGS",
        options={"maxiter": options.max_iterations, "gtol": 1e-10},
    )
    params = start.with_vector(outcome.x)
    final = evaluate(params, data, clamp=options.clamp)
    gradient_norm = float(np.max(np.abs(final.gradient), initial=0.0))
    converged = gradient_norm <= options.gradient_tolerance * max(1.0, abs(final.value))
    return MleFit(
        params=params,
        log_likelihood=final.value,
        converged=bool(converged),
        iterations=int(outcome.nit),
        gradient_norm=gradient_norm,
        monotonicity_violated=params.monotonicity_violated,
        clamped=final.clamped,
    )


def fit_mle(
    data: OutcomeData,
    init: MisLikParams | None = None,
    options: MleOptions | None = None,
) -> MleFit:
    """
    Maximize the corrected log-likelihood with BFGS and the analytic gradient.

    Starts from the naive logistic fit (rates at ``init_rates``) and from the
    validation-only fit (rates from the validation cross-table); the start
    with the highest final likelihood wins. A supplied ``init`` is tried
    first, and alone when ``multi_start`` is False.

    Raises:
        IdentifiabilityError: free rates without validation rows
    """
    options = options or MleOptions()
    if init is not None and init.fixed_rates is not None and options.fixed_rates is None:
        options = replace(options, fixed_rates=init.fixed_rates)
    if options.fixed_rates is None and data.n_validation == 0:
        raise IdentifiabilityError(
            "Misclassification rates cannot be estimated without validation data; "
            "fix the rates for a sensitivity analysis"
        )

    starts: list[MisLikParams] = []
    if init is not None:
        starts.append(_align_start(init, options))
    if init is None or options.multi_start:
        starts.extend(_default_starts(data, options))

    best: MleFit | None = None
    for start in starts:
        fit = _maximize(start, data, options)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    assert best is not None
    best = replace(best, starts=len(starts))

    if not best.converged:
        logger.warning(
            f"Corrected MLE did not converge (max |gradient| = {best.gradient_norm:.3g} "
            f"after {best.iterations} iterations)"
        )
    if best.monotonicity_violated:
        g10, g01 = best.rates
        logger.warning(
            f"Estimated rates violate monotonicity: gamma10 + gamma01 = {g10 + g01:.4f} >= 1"
        )
    return best


def _align_start(init: MisLikParams, options: MleOptions) -> MisLikParams:
    if options.fixed_rates is not None:
        return MisLikParams(init.beta, init.psi, fixed_rates=options.fixed_rates)
    if init.fixed_rates is not None:
        return MisLikParams.from_rates(init.beta, init.psi, *options.init_rates)
    return init


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Diagnostics for the conditions under which the corrected MLE is identified."""

    rank: int
    n_columns: int
    condition_number: float
    gamma_sum: float
    monotonicity_margin: float
    boundary_rows: int
    sparse_validation: bool = False
    messages: tuple[str, ...] = field(default_factory=tuple)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n_columns

    @property
    def monotonicity_violated(self) -> bool:
        return self.monotonicity_margin <= MONOTONICITY_TOLERANCE

    @property
    def boundary_warning(self) -> bool:
        return self.boundary_rows > 0

    @property
    def passed(self) -> bool:
        return not self.flags

    @property
    def flags(self) -> tuple[str, ...]:
        """Short names of the failed checks, in a fixed order."""
        checks = (
            ("singular", not self.full_rank),
            ("monotonicity", self.monotonicity_violated),
            ("boundary", self.boundary_warning),
            ("sparse_validation", self.sparse_validation),
        )
        return tuple(name for name, failed in checks if failed)


def check_identifiability(
    data: OutcomeData,
    rates_estimate: Sequence[float] | MisclassRates,
    params: MisLikParams | None = None,
) -> IdentifiabilityReport:
    """
    Report design rank and conditioning, the monotonicity margin of the rates,
    and fitted probabilities within 1e-6 of 0 or 1. With free-rate ``params``
    it also flags a validation subset too small to estimate the rates. Problems
    are logged as warnings; never raises.
    """
    if isinstance(rates_estimate, MisclassRates):
        g10, g01 = rates_estimate.as_tuple()
    else:
        g10, g01 = (float(r) for r in rates_estimate)
    full = data.design.full
    n_columns = full.shape[1]
    messages: list[str] = []

    if full.shape[0] == 0 or n_columns == 0:
        rank, condition = 0, float("inf")
    else:
        singular = np.linalg.svd(full, compute_uv=False)
        top = singular[0] if singular.size else 0.0
        rank = int(np.sum(singular > 1e-10 * top)) if top > 0 else 0
        condition = float(top / singular[-1]) if singular[-1] > 0 else float("inf")
    if rank < n_columns:
        messages.append(f"design is singular (rank {rank} < {n_columns} columns)")

    margin = 1.0 - g10 - g01
    if margin <= MONOTONICITY_TOLERANCE:
        messages.append(f"monotonicity violated: gamma10 + gamma01 = {g10 + g01:.4f} >= 1")

    boundary = 0
    if params is not None and params.beta.size + params.psi.size == n_columns:
        p = expit(data.design.full @ np.concatenate([params.beta, params.psi]))
        boundary = int(np.sum((p < BOUNDARY_PROBABILITY) | (p > 1.0 - BOUNDARY_PROBABILITY)))
        if boundary:
            messages.append(
                f"{boundary} fitted probabilities lie within {BOUNDARY_PROBABILITY} of 0 or 1"
            )

    # Free rates need both true-outcome classes in V and more validated rows than parameters.
    sparse = False
    if params is not None and not params.gamma_fixed:
        y = data.true_outcome
        n_free = n_columns + 2
        if data.n_validation < n_free:
            sparse = True
            messages.append(
                f"{data.n_validation} validation rows for {n_free} free parameters"
            )
        elif not (np.any(y == 0.0) and np.any(y == 1.0)):
            sparse = True
            messages.append("validation rows contain only one true-outcome class")

    for message in messages:
        logger.warning(f"Identifiability check: {message}")
    return IdentifiabilityReport(
        rank=rank,
        n_columns=n_columns,
        condition_number=condition,
        gamma_sum=g10 + g01,
        monotonicity_margin=margin,
        boundary_rows=boundary,
        sparse_validation=sparse,
        messages=tuple(messages),
    )
