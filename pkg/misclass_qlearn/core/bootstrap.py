"""Percentile bootstrap for Q-learning estimates."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from misclass_qlearn.core.errors import (
    BootstrapError,
    BootstrapRefitError,
    ConfigError,
    MisclassQLearnError,
)
from misclass_qlearn.core.qlearn import (
    Method,
    QLearnData,
    QLearnFit,
    QLearnOptions,
    QLearnSpec,
    fit_prepared,
    prepare_data,
)
from misclass_qlearn.core.types import StudyDataset
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

MIN_SAMPLES = 50
MAX_FAILURE_FRACTION = 0.20

Statistic = Callable[[NDArray[np.intp], NDArray[np.intp]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Successful bootstrap replicates with their percentile intervals."""

    estimates: NDArray[np.float64]
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    level: float
    samples: int
    failures: int

    @property
    def se(self) -> NDArray[np.float64]:
        """Bootstrap standard error (sample SD of the replicates)."""
        if self.estimates.shape[0] < 2:
            return np.full(self.estimates.shape[1], np.nan)
        return np.asarray(np.std(self.estimates, axis=0, ddof=1))

    def covers(self, truth: NDArray[np.float64]) -> NDArray[np.bool_]:
        return (self.lower <= truth) & (truth <= self.upper)


def resample_indices(
    n_validation: int,
    n_total: int,
    rng: np.random.Generator,
    stratified: bool = True,
) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """
    Draw one bootstrap sample as (validation rows, main rows).

    Stratified sampling keeps the validation count fixed; otherwise all rows
    are pooled and split again by membership.
    """
    if stratified:
        v = rng.integers(0, n_validation, size=n_validation) if n_validation else np.empty(0)
        n_main = n_total - n_validation
        m = n_validation + rng.integers(0, n_main, size=n_main) if n_main else np.empty(0)
        return v.astype(np.intp), m.astype(np.intp)
    rows = rng.integers(0, n_total, size=n_total).astype(np.intp)
    return rows[rows < n_validation], rows[rows >= n_validation]


def percentile_bootstrap(
    statistic: Statistic,
    n_validation: int,
    n_total: int,
    samples: int,
    rng: np.random.Generator,
    level: float = 0.95,
    stratified: bool = True,
) -> BootstrapResult:
    """
    Percentile bootstrap of a vector statistic over resampled row indices.

    A replicate fails when the statistic raises a package error or returns
    non-finite values; failures are counted and skipped.

    Raises:
        ConfigError: fewer than 50 samples or a level outside (0, 1)
        BootstrapError: more than 20% of the replicates failed
    """
    if samples < MIN_SAMPLES:
        raise ConfigError(f"Bootstrap needs at least {MIN_SAMPLES} samples, got {samples}")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"Confidence level must lie in (0, 1), got {level}")

    replicates: list[NDArray[np.float64]] = []
    failures = 0
    for _ in range(samples):
        v, m = resample_indices(n_validation, n_total, rng, stratified)
        try:
            value = np.asarray(statistic(v, m), dtype=float)
        except MisclassQLearnError as e:
            logger.debug(f"Bootstrap refit failed: {e}")
            failures += 1
            continue
        if not np.all(np.isfinite(value)):
            failures += 1
            continue
        replicates.append(value)

    if failures:
        logger.info(f"{failures} of {samples} bootstrap refits failed")
    if failures > MAX_FAILURE_FRACTION * samples:
        raise BootstrapError(
            f"{failures} of {samples} bootstrap refits failed "
            f"(limit {MAX_FAILURE_FRACTION:.0%})"
        )
    estimates = np.vstack(replicates)
    tail = 50.0 * (1.0 - level)
    lower, upper = np.percentile(estimates, [tail, 100.0 - tail], axis=0)
    return BootstrapResult(estimates, lower, upper, level, samples, failures)


def bootstrap_ci(
    data: StudyDataset | QLearnData,
    spec: QLearnSpec,
    method: Method | str,
    samples: int,
    rng: np.random.Generator,
    level: float = 0.95,
    options: QLearnOptions | None = None,
    point: QLearnFit | None = None,
    stratified: bool = True,
) -> BootstrapResult:
    """
    Percentile intervals for every blip coefficient of a Q-learning fit.

    Rows are resampled within the validation and main subsets so each
    replicate keeps the original validation count. Corrected refits start
    from ``point`` when it is given.
    """
    prepared = prepare_data(data, spec) if isinstance(data, StudyDataset) else data
    method = Method(method)
    options = options or QLearnOptions()
    if point is not None and point.mle_diagnostics is not None:
        options = replace(
            options,
            init=point.mle_diagnostics.params,
            mle=replace(options.mle, multi_start=False),
        )
    options = replace(options, diagnose=False)

    def statistic(v: NDArray[np.intp], m: NDArray[np.intp]) -> NDArray[np.float64]:
        fit = fit_prepared(prepared.take(v, m), spec, method, options)
        if not fit.converged:
            raise BootstrapRefitError(f"{method.value} refit did not converge")
        return fit.psi_vector()

    return percentile_bootstrap(
        statistic, prepared.n_validation, prepared.n_rows, samples, rng, level, stratified
    )
