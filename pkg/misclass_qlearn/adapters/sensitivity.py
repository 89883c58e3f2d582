"""Sensitivity analysis of an estimated regime to assumed misclassification rates."""

from __future__ import annotations

from dataclasses import dataclass, field

from misclass_qlearn.adapters.csv_io import ingest_csv
from misclass_qlearn.adapters.report import Record
from misclass_qlearn.core.bootstrap import BootstrapResult, bootstrap_ci
from misclass_qlearn.core.design import standardize_columns
from misclass_qlearn.core.errors import ConfigError, MisclassQLearnError
from misclass_qlearn.core.qlearn import (
    Method,
    QLearnData,
    QLearnFit,
    QLearnOptions,
    QLearnSpec,
    fit_prepared,
    prepare_data,
)
from misclass_qlearn.core.types import MisclassRates, StudyDataset
from misclass_qlearn.utils.config import AnalysisConfig
from misclass_qlearn.utils.logger import get_logger
from misclass_qlearn.utils.rng import RandomStreams

logger = get_logger(__name__)


@dataclass
class SensitivityResult:
    """One fit of the analysis: naive, corrected at fixed rates, or corrected with free rates."""

    method: Method
    rates: MisclassRates | None
    fit: QLearnFit | None = None
    interval: BootstrapResult | None = None
    error: str | None = None

    def _estimated_rates(self) -> tuple[float, float] | None:
        # Free-rate estimates are kept even when they violate monotonicity; the
        # monotonicity flag marks them.
        if self.fit is None or self.fit.mle_diagnostics is None:
            return None
        if self.fit.mle_diagnostics.params.gamma_fixed:
            return None
        return self.fit.mle_diagnostics.rates

    @property
    def rule(self) -> str | None:
        if self.fit is None:
            return None
        return self.fit.regime().describe(stage=1)

    def records(self) -> list[Record]:
        """One record per blip coefficient, or a single error record."""
        rates = self.rates.as_tuple() if self.rates is not None else self._estimated_rates()
        base: Record = {
            "method": self.method.value,
            "gamma10": None if rates is None else rates[0],
            "gamma01": None if rates is None else rates[1],
        }
        if self.fit is None:
            return [{**base, "parameter": None, "term": None, "error": self.error}]
        psi = self.fit.psi_vector()
        terms = [c.label for c in self.fit.stage2.blip_columns]
        rows: list[Record] = []
        for k, (label, term) in enumerate(zip(self.fit.psi_labels(), terms, strict=True)):
            rows.append(
                {
                    **base,
                    "parameter": label,
                    "term": term,
                    "estimate": float(psi[k]),
                    "se": float(self.interval.se[k]) if self.interval else None,
                    "ci_low": float(self.interval.lower[k]) if self.interval else None,
                    "ci_high": float(self.interval.upper[k]) if self.interval else None,
                    "rule": self.rule,
                    "flags": ";".join(self.fit.flags) or None,
                    "error": self.error,
                }
            )
        return rows


@dataclass
class SensitivityReport:
    """All fits of one sensitivity analysis, in grid order after the naive fit."""

    results: list[SensitivityResult] = field(default_factory=list)
    n_rows: int = 0
    n_validation: int = 0

    def records(self) -> list[Record]:
        return [record for result in self.results for record in result.records()]

    @property
    def error_count(self) -> int:
        return sum(r.error is not None for r in self.results)

    @property
    def flagged(self) -> list[SensitivityResult]:
        """Fits that failed an identifiability check."""
        return [r for r in self.results if r.fit is not None and r.fit.flags]


class SensitivityAnalysis:
    """Runs the naive fit and the corrected fit at every assumed rate pair."""

    def __init__(self, config: AnalysisConfig):
        if config.n_stages != 1:
            raise ConfigError("Sensitivity analysis needs a one-stage configuration")
        self.config = config
        self.spec: QLearnSpec = config.spec
        self.streams = RandomStreams(config.seed)

    def prepare(self, dataset: StudyDataset | None = None) -> QLearnData:
        """Ingest (unless given), standardize and build the design."""
        if dataset is None:
            dataset = ingest_csv(self.config.input_path, self.config)
        if self.config.standardize_columns:
            dataset, _ = standardize_columns(dataset, self.config.standardize_columns)
        return prepare_data(dataset, self.spec)

    def run(self, dataset: StudyDataset | None = None) -> SensitivityReport:
        data = self.prepare(dataset)
        report = SensitivityReport(n_rows=data.n_rows, n_validation=data.n_validation)

        report.results.append(self._fit(data, Method.NAIVE, None, 0))
        for index, rates in enumerate(self.config.rates_grid, start=1):
            report.results.append(self._fit(data, Method.MLE_CORRECTED, rates, index))
        if data.n_validation > 0:
            free = self._fit(data, Method.MLE_CORRECTED, None, len(self.config.rates_grid) + 1)
            if free.fit is not None and free.fit.gamma_estimates is not None:
                free.rates = free.fit.gamma_estimates
            report.results.append(free)

        if report.error_count:
            logger.warning(f"{report.error_count} sensitivity fit(s) failed")
        return report

    def _fit(
        self,
        data: QLearnData,
        method: Method,
        rates: MisclassRates | None,
        stream_key: int,
    ) -> SensitivityResult:
        result = SensitivityResult(method, rates)
        options = QLearnOptions(fixed_rates=rates)
        try:
            result.fit = fit_prepared(data, self.spec, method, options)
        except MisclassQLearnError as e:
            logger.warning(f"{method.value} fit at rates {rates} failed: {e}")
            result.error = str(e)
            return result
        if not result.fit.converged:
            result.error = "fit did not converge"
        if self.config.bootstrap_samples:
            try:
                result.interval = bootstrap_ci(
                    data,
                    self.spec,
                    method,
                    self.config.bootstrap_samples,
                    self.streams.get("bootstrap", stream_key),
                    level=self.config.level,
                    options=options,
                    point=result.fit,
                    stratified=data.n_validation > 0,
                )
            except MisclassQLearnError as e:
                logger.warning(f"Bootstrap for {method.value} at rates {rates} failed: {e}")
                result.error = str(e)
        return result


def run_sensitivity(
    config: AnalysisConfig, dataset: StudyDataset | None = None
) -> SensitivityReport:
    """
    Fit the naive estimator once and the fixed-rate corrected estimator per grid point.

    Failed grid points are reported with their error; the rest of the report
    is still produced.

    Raises:
        ConfigError: the configuration is not one-stage
        CsvFormatError: the input file cannot be read
    """
    return SensitivityAnalysis(config).run(dataset)
