"""Unit tests for Q-learning fits and prediction metrics."""

from __future__ import annotations

import numpy as np
import pytest

from misclass_qlearn.core.errors import (
    DataError,
    DimensionError,
    EstimationError,
    MissingCounterfactualError,
)
from misclass_qlearn.core.qlearn import (
    Method,
    QLearnFit,
    QLearnOptions,
    QLearnSpec,
    evaluate_predictions,
    fit_qlearning,
    optimal_action,
    prepare_data,
    pseudo_outcome,
    q2_probability,
)
from misclass_qlearn.core.simulation import (
    TwoStageTruth,
    generate_two_stage,
    one_stage_spec,
    two_stage_spec,
)
from misclass_qlearn.core.types import MisclassRates, StageModel, StudyDataset


class TestQ2Probability:
    """Tests for q2_probability."""

    def test_reference_value(self) -> None:
        """Test expit(0.25 + 0.25) with a single intercept column in each part."""
        model = StageModel.from_names(["1"], ["1"], beta=[0.25], psi=[0.25])
        assert q2_probability([1.0], [1.0], 1, model) == pytest.approx(0.62246, abs=1e-5)

    def test_treatment_sign(self) -> None:
        """Test the blip enters with the treatment sign."""
        model = StageModel.from_names(["1"], ["1"], beta=[0.0], psi=[1.0])
        assert q2_probability([1.0], [1.0], 1, model) == pytest.approx(
            1.0 - q2_probability([1.0], [1.0], -1, model)
        )

    def test_dimension_mismatch(self) -> None:
        """Test history sizes must match the model."""
        model = StageModel.from_names(["1"], ["1"])
        with pytest.raises(DimensionError):
            q2_probability([1.0, 2.0], [1.0], 1, model)

    def test_invalid_treatment(self) -> None:
        """Test treatments other than -1/+1 are rejected."""
        model = StageModel.from_names(["1"], ["1"])
        with pytest.raises(DataError):
            q2_probability([1.0], [1.0], 0, model)


class TestOptimalAction:
    """Tests for optimal_action."""

    @pytest.mark.parametrize(
        "psi, h, expected",
        [
            ([0.5, -0.5], [1.0, 0.0], 1),
            ([0.5, -0.5], [1.0, 2.0], -1),
            ([0.5, -0.5], [1.0, 1.0], -1),
            ([-0.3688, 0.0187], [1.0, 1.0], -1),
        ],
    )
    def test_sign_of_blip(self, psi: list[float], h: list[float], expected: int) -> None:
        """Test the recommended action follows the blip sign, ties to -1."""
        assert optimal_action(psi, h) == expected

    def test_dimension_mismatch(self) -> None:
        """Test psi and history sizes must agree."""
        with pytest.raises(DimensionError):
            optimal_action([1.0], [1.0, 2.0])

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
    def test_positive_scaling_of_psi(self, scale: float, rng: np.random.Generator) -> None:
        """Test multiplying psi by a positive constant leaves the action unchanged."""
        for _ in range(20):
            psi, h = rng.normal(size=3), rng.normal(size=3)
            assert optimal_action(scale * psi, h) == optimal_action(psi, h)


class TestPseudoOutcome:
    """Tests for pseudo_outcome."""

    def test_is_max_over_treatments(self, rng: np.random.Generator) -> None:
        """Test the pseudo-outcome equals the larger logit over both treatments."""
        for _ in range(20):
            model = StageModel.from_names(
                ["1", "X"], ["1", "Z"], beta=rng.normal(size=2), psi=rng.normal(size=2)
            )
            h0, h1 = rng.normal(size=2), rng.normal(size=2)
            logits = [model.beta @ h0 + (model.psi @ h1) * a for a in (-1, 1)]
            assert pseudo_outcome(model, h0, h1) == pytest.approx(max(logits))


class TestFitQLearning:
    """Tests for fit_qlearning on the one-stage scenario."""

    def test_methods_produce_blip_estimates(self, one_stage_dataset: StudyDataset) -> None:
        """Test each method returns a converged fit with two blip coefficients."""
        spec = one_stage_spec()
        for method in Method:
            fit = fit_qlearning(one_stage_dataset, spec, method)
            assert fit.method is method
            assert fit.converged
            assert fit.stage1 is None
            assert fit.psi_vector().shape == (2,)
            assert fit.psi_labels() == ["psi10", "psi11"]

    def test_naive_matches_logistic_on_surrogate(self, one_stage_dataset: StudyDataset) -> None:
        """Test the naive fit equals the corrected fit at zero rates on main-study data."""
        spec = one_stage_spec()
        main_only = StudyDataset(one_stage_dataset.trajectories, validation_count=0)
        naive = fit_qlearning(main_only, spec, Method.NAIVE)
        zero = fit_qlearning(
            main_only,
            spec,
            Method.MLE_CORRECTED,
            QLearnOptions(fixed_rates=MisclassRates()),
        )
        np.testing.assert_allclose(zero.psi_vector(), naive.psi_vector(), atol=1e-5)

    def test_corrected_reports_rate_estimates(self, one_stage_dataset: StudyDataset) -> None:
        """Test free-rate fits record estimated rates and diagnostics."""
        fit = fit_qlearning(one_stage_dataset, one_stage_spec(), "mle_corrected")
        assert fit.mle_diagnostics is not None
        assert fit.gamma_estimates is not None

    def test_fixed_rates_leave_gamma_estimates_empty(
        self, one_stage_dataset: StudyDataset
    ) -> None:
        """Test sensitivity fits do not report estimated rates."""
        fit = fit_qlearning(
            one_stage_dataset,
            one_stage_spec(),
            Method.MLE_CORRECTED,
            QLearnOptions(fixed_rates=MisclassRates(0.2, 0.2)),
        )
        assert fit.gamma_estimates is None
        assert fit.mle_diagnostics is not None
        assert fit.mle_diagnostics.rates == (0.2, 0.2)

    def test_stage_mismatch(self, one_stage_dataset: StudyDataset) -> None:
        """Test a one-stage dataset cannot be fit with a two-stage spec."""
        with pytest.raises(DataError):
            fit_qlearning(one_stage_dataset, two_stage_spec(), Method.NAIVE)

    def test_failure_is_wrapped(self, one_stage_dataset: StudyDataset) -> None:
        """Test a rank-deficient outcome model raises EstimationError with the stage."""
        model = StageModel.from_names(["1", "X", "X"], ["1"])
        with pytest.raises(EstimationError) as excinfo:
            fit_qlearning(one_stage_dataset, QLearnSpec(model), Method.NAIVE)
        assert excinfo.value.stage == 1
        assert excinfo.value.method == "naive"

    def test_regime_describes_rule(self, one_stage_dataset: StudyDataset) -> None:
        """Test the fitted regime renders its decision rule."""
        fit = fit_qlearning(one_stage_dataset, one_stage_spec(), Method.NAIVE)
        assert fit.regime().describe().startswith("â = 1 if ")

    def test_corrected_fit_is_diagnosed(self, one_stage_dataset: StudyDataset) -> None:
        """Test a corrected fit carries an identifiability report and naive fits do not."""
        spec = one_stage_spec()
        corrected = fit_qlearning(one_stage_dataset, spec, Method.MLE_CORRECTED)
        assert corrected.identifiability is not None
        assert corrected.identifiability.full_rank
        assert corrected.flags == ()
        naive = fit_qlearning(one_stage_dataset, spec, Method.NAIVE)
        assert naive.identifiability is None
        assert naive.flags == ()

    def test_diagnosis_can_be_skipped(self, one_stage_dataset: StudyDataset) -> None:
        """Test diagnose=False leaves the report empty."""
        fit = fit_qlearning(
            one_stage_dataset, one_stage_spec(), Method.MLE_CORRECTED, QLearnOptions(diagnose=False)
        )
        assert fit.identifiability is None

    def test_small_validation_subset_is_flagged(self, one_stage_dataset: StudyDataset) -> None:
        """Test free rates with four validated rows are flagged on the fit."""
        sparse = StudyDataset(one_stage_dataset.trajectories, validation_count=4)
        fit = fit_qlearning(sparse, one_stage_spec(), Method.MLE_CORRECTED)
        assert "sparse_validation" in fit.flags


class TestTwoStage:
    """Tests for two-stage Q-learning."""

    def test_fits_both_stages(self, two_stage_dataset: StudyDataset) -> None:
        """Test a two-stage fit has five blip coefficients, outcome stage first."""
        fit = fit_qlearning(two_stage_dataset, two_stage_spec(), Method.MLE_CORRECTED)
        assert fit.stage1 is not None
        assert fit.psi_labels() == ["psi20", "psi21", "psi22", "psi10", "psi11"]
        assert fit.psi_vector().shape == (5,)
        assert len(fit.regime().stages) == 2

    def test_validation_only_uses_validation_rows(self, two_stage_dataset: StudyDataset) -> None:
        """Test the validation-only fit ignores main-study rows entirely."""
        spec = two_stage_spec()
        validated = StudyDataset(
            two_stage_dataset.validation, two_stage_dataset.validation_count
        )
        full = fit_qlearning(two_stage_dataset, spec, Method.VALIDATION_ONLY)
        subset = fit_qlearning(validated, spec, Method.VALIDATION_ONLY)
        np.testing.assert_allclose(full.psi_vector(), subset.psi_vector(), atol=1e-10)

    def test_prepare_data_aligns_stages(self, two_stage_dataset: StudyDataset) -> None:
        """Test both stage designs have one row per trajectory."""
        data = prepare_data(two_stage_dataset, two_stage_spec())
        assert data.first is not None
        assert data.first.n_rows == data.outcome.n_rows == two_stage_dataset.total_count


class TestEvaluatePredictions:
    """Tests for evaluate_predictions."""

    @pytest.fixture
    def test_set(self) -> StudyDataset:
        return generate_two_stage(2000, MisclassRates(), np.random.default_rng(99))

    def test_oracle_regime_is_perfect(self, test_set: StudyDataset) -> None:
        """Test the data-generating regime scores full accuracy and no outcome errors."""
        truth = TwoStageTruth()
        first = StageModel.from_names(["1"], ["1", "Z1"], beta=[0.0], psi=truth.stage1_blip.psi)
        oracle = QLearnFit(Method.NAIVE, truth.stage2, first)
        metrics = evaluate_predictions(oracle, truth, test_set, np.random.default_rng(1))
        assert metrics.regime_accuracy_stage1 == 1.0
        assert metrics.regime_accuracy_stage2 == 1.0
        assert metrics.regime_accuracy_both == 1.0
        assert metrics.outcome_error_rate == 0.0

    def test_metrics_are_proportions(
        self, two_stage_dataset: StudyDataset, test_set: StudyDataset
    ) -> None:
        """Test every metric of a fitted regime lies in [0, 1]."""
        fit = fit_qlearning(two_stage_dataset, two_stage_spec(), Method.NAIVE)
        metrics = evaluate_predictions(
            fit, TwoStageTruth(), test_set, np.random.default_rng(2), reference="realized"
        )
        for value in metrics.to_dict().values():
            assert np.isnan(value) or 0.0 <= value <= 1.0
        assert metrics.regime_accuracy_both <= min(
            metrics.regime_accuracy_stage1, metrics.regime_accuracy_stage2
        )

    def test_requires_counterfactual_generator(
        self, two_stage_dataset: StudyDataset, test_set: StudyDataset
    ) -> None:
        """Test a truth without a counterfactual generator is rejected."""
        fit = fit_qlearning(two_stage_dataset, two_stage_spec(), Method.NAIVE)
        with pytest.raises(MissingCounterfactualError):
            evaluate_predictions(
                fit, TwoStageTruth(counterfactual=None), test_set, np.random.default_rng(3)
            )

    def test_requires_two_stage_fit(
        self, one_stage_dataset: StudyDataset, test_set: StudyDataset
    ) -> None:
        """Test one-stage fits cannot be scored."""
        fit = fit_qlearning(one_stage_dataset, one_stage_spec(), Method.NAIVE)
        with pytest.raises(DataError):
            evaluate_predictions(fit, TwoStageTruth(), test_set, np.random.default_rng(4))
