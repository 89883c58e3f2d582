"""Unit tests for the percentile bootstrap."""

from __future__ import annotations

import numpy as np
import pytest

from misclass_qlearn.core.bootstrap import (
    BootstrapResult,
    bootstrap_ci,
    percentile_bootstrap,
    resample_indices,
)
from misclass_qlearn.core.errors import BootstrapError, ConfigError, NumericalError
from misclass_qlearn.core.qlearn import Method, fit_qlearning
from misclass_qlearn.core.simulation import one_stage_spec
from misclass_qlearn.core.types import StudyDataset


class TestResampleIndices:
    """Tests for resample_indices."""

    def test_stratified_keeps_subsets(self, rng: np.random.Generator) -> None:
        """Test stratified draws stay inside their subset and keep its size."""
        v, m = resample_indices(30, 100, rng)
        assert v.size == 30
        assert m.size == 70
        assert v.min() >= 0 and v.max() < 30
        assert m.min() >= 30 and m.max() < 100

    def test_pooled_draws(self, rng: np.random.Generator) -> None:
        """Test pooled draws are split by membership and total n."""
        v, m = resample_indices(30, 100, rng, stratified=False)
        assert v.size + m.size == 100
        assert np.all(v < 30)
        assert np.all(m >= 30)

    def test_no_validation_rows(self, rng: np.random.Generator) -> None:
        """Test main-study-only data resamples the main study."""
        v, m = resample_indices(0, 50, rng)
        assert v.size == 0
        assert m.size == 50


class TestPercentileBootstrap:
    """Tests for percentile_bootstrap."""

    def test_constant_statistic(self, rng: np.random.Generator) -> None:
        """Test a constant statistic gives a zero-width interval and zero SE."""
        result = percentile_bootstrap(lambda v, m: np.array([1.5, -2.0]), 10, 40, 50, rng)
        np.testing.assert_array_equal(result.lower, [1.5, -2.0])
        np.testing.assert_array_equal(result.upper, [1.5, -2.0])
        np.testing.assert_array_equal(result.se, [0.0, 0.0])
        assert result.failures == 0

    def test_mean_interval(self, rng: np.random.Generator) -> None:
        """Test the interval of a sample mean brackets the mean."""
        data = np.random.default_rng(0).normal(3.0, 1.0, 200)

        def mean(v: np.ndarray, m: np.ndarray) -> np.ndarray:
            return np.array([data[np.concatenate([v, m])].mean()])

        result = percentile_bootstrap(mean, 0, 200, 400, rng)
        assert result.lower[0] < data.mean() < result.upper[0]
        assert result.se[0] == pytest.approx(1.0 / np.sqrt(200), rel=0.2)

    def test_too_few_samples(self, rng: np.random.Generator) -> None:
        """Test fewer than 50 samples is a configuration error."""
        with pytest.raises(ConfigError):
            percentile_bootstrap(lambda v, m: np.zeros(1), 10, 40, 49, rng)

    def test_failures_are_skipped(self, rng: np.random.Generator) -> None:
        """Test occasional failures are counted and excluded."""
        calls = iter(range(1000))

        def flaky(v: np.ndarray, m: np.ndarray) -> np.ndarray:
            if next(calls) % 10 == 0:
                raise NumericalError("refit failed")
            return np.zeros(1)

        result = percentile_bootstrap(flaky, 10, 40, 100, rng)
        assert result.failures == 10
        assert result.estimates.shape == (90, 1)

    def test_too_many_failures(self, rng: np.random.Generator) -> None:
        """Test more than 20% failures raises."""
        calls = iter(range(1000))

        def flaky(v: np.ndarray, m: np.ndarray) -> np.ndarray:
            if next(calls) % 3 == 0:
                return np.array([np.nan])
            return np.zeros(1)

        with pytest.raises(BootstrapError):
            percentile_bootstrap(flaky, 10, 40, 60, rng)

    def test_covers(self) -> None:
        """Test coverage is checked per coordinate with closed bounds."""
        result = BootstrapResult(
            np.zeros((2, 3)), np.array([0.0, 1.0, -1.0]), np.array([1.0, 2.0, 0.0]), 0.95, 2, 0
        )
        assert result.covers(np.array([1.0, 0.5, -1.0])).tolist() == [True, False, True]


class TestBootstrapCi:
    """Tests for bootstrap_ci on Q-learning fits."""

    def test_naive_intervals(self, one_stage_dataset: StudyDataset) -> None:
        """Test intervals bracket the naive point estimate."""
        spec = one_stage_spec()
        point = fit_qlearning(one_stage_dataset, spec, Method.NAIVE)
        result = bootstrap_ci(
            one_stage_dataset, spec, Method.NAIVE, 50, np.random.default_rng(5), point=point
        )
        psi = point.psi_vector()
        assert result.estimates.shape[1] == 2
        assert np.all(result.lower <= result.upper)
        assert np.all(result.lower < psi) and np.all(psi < result.upper)

    def test_reproducible(self, one_stage_dataset: StudyDataset) -> None:
        """Test equal seeds give identical intervals."""
        spec = one_stage_spec()
        first = bootstrap_ci(one_stage_dataset, spec, "naive", 50, np.random.default_rng(6))
        second = bootstrap_ci(one_stage_dataset, spec, "naive", 50, np.random.default_rng(6))
        np.testing.assert_array_equal(first.estimates, second.estimates)

    def test_corrected_warm_start(self, one_stage_dataset: StudyDataset) -> None:
        """Test corrected refits from the point estimate produce intervals."""
        spec = one_stage_spec()
        point = fit_qlearning(one_stage_dataset, spec, Method.MLE_CORRECTED)
        result = bootstrap_ci(
            one_stage_dataset,
            spec,
            Method.MLE_CORRECTED,
            50,
            np.random.default_rng(7),
            point=point,
        )
        assert result.samples == 50
        assert np.all(np.isfinite(result.se))
