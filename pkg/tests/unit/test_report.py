"""Unit tests for report records and serialization."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from rich.console import Console

from misclass_qlearn.adapters.report import (
    PREDICTION_COLUMNS,
    SENSITIVITY_COLUMNS,
    SIMULATION_COLUMNS,
    prediction_records,
    prediction_table,
    render_csv,
    render_json,
    sensitivity_table,
    simulation_records,
    simulation_table,
    write_report,
)
from misclass_qlearn.core.errors import ConfigError
from misclass_qlearn.core.qlearn import Method
from misclass_qlearn.core.simulation import (
    PredictionSummary,
    ReplicationSummary,
    Scenario,
    ScenarioConfig,
)


@pytest.fixture
def cell() -> ScenarioConfig:
    return ScenarioConfig(n=500, rho=0.3, gamma10=0.1, gamma01=0.1, replications=10)


@pytest.fixture
def summaries() -> dict[Method, ReplicationSummary]:
    return {
        Method.NAIVE: ReplicationSummary(
            method=Method.NAIVE,
            parameters=("psi10", "psi11"),
            truth=np.array([0.5, -0.5]),
            bias=np.array([-0.1, 0.05]),
            se=np.array([0.08, 0.07]),
            rmse=np.array([0.13, 0.09]),
            coverage=np.array([np.nan, np.nan]),
            replications=10,
            failure_count=1,
        )
    }


def _render(table: object) -> str:
    console = Console(width=200, record=True)
    console.print(table)
    return console.export_text()


class TestSimulationRecords:
    """Tests for simulation records."""

    def test_one_record_per_parameter(
        self, cell: ScenarioConfig, summaries: dict[Method, ReplicationSummary]
    ) -> None:
        """Test records carry the cell settings and every column."""
        records = simulation_records(cell, summaries)
        assert len(records) == 2
        assert set(records[0]) == set(SIMULATION_COLUMNS)
        assert records[0]["method"] == "naive"
        assert records[0]["rho"] == 0.3
        assert records[1]["bias"] == 0.05
        assert records[0]["failures"] == 1

    def test_csv_columns_in_order(
        self, cell: ScenarioConfig, summaries: dict[Method, ReplicationSummary]
    ) -> None:
        """Test the CSV header follows the fixed column order."""
        text = render_csv(simulation_records(cell, summaries), SIMULATION_COLUMNS)
        assert text.splitlines()[0] == ",".join(SIMULATION_COLUMNS)
        assert text.endswith("\n")
        assert "\r" not in text

    def test_json_nan_becomes_null(
        self, cell: ScenarioConfig, summaries: dict[Method, ReplicationSummary]
    ) -> None:
        """Test non-finite values are written as null."""
        data = json.loads(render_json(simulation_records(cell, summaries), SIMULATION_COLUMNS))
        assert list(data[0]) == list(SIMULATION_COLUMNS)
        assert data[0]["cr"] is None
        assert data[0]["truth"] == 0.5

    def test_table(
        self, cell: ScenarioConfig, summaries: dict[Method, ReplicationSummary]
    ) -> None:
        """Test the console table shows three decimals and the method label."""
        text = _render(simulation_table(simulation_records(cell, summaries)))
        assert "Naive" in text
        assert "-0.100" in text
        assert "psi11" in text

    def test_rho_keeps_two_decimals(
        self, summaries: dict[Method, ReplicationSummary]
    ) -> None:
        """Test a validation fraction of 0.25 is not rounded to one decimal."""
        cell = ScenarioConfig(n=500, rho=0.25, gamma10=0.1, gamma01=0.1, replications=10)
        text = _render(simulation_table(simulation_records(cell, summaries)))
        assert "0.25" in text


class TestPredictionRecords:
    """Tests for prediction records."""

    def test_record(self) -> None:
        """Test metrics appear under their column names."""
        config = ScenarioConfig(scenario=Scenario.PREDICTIVE, replications=2)
        metrics = {
            "accuracy_stage2": 0.9,
            "accuracy_stage1": 0.8,
            "accuracy_both": 0.75,
            "error_rate": 0.1,
            "sensitivity": 0.95,
            "specificity": math.nan,
        }
        summary = PredictionSummary(Method.MLE_CORRECTED, metrics, 2)
        records = prediction_records(config, {Method.MLE_CORRECTED: summary})
        assert set(records[0]) == set(PREDICTION_COLUMNS)
        assert records[0]["accuracy_both"] == 0.75
        text = _render(prediction_table(records))
        assert "MLE" in text
        assert "75.0" in text


class TestWriteReport:
    """Tests for write_report."""

    def test_csv_and_json(self, tmp_path: Path) -> None:
        """Test both formats are written."""
        records = [{"method": "naive", "estimate": 1.0}]
        csv_path = write_report(records, ("method", "estimate"), tmp_path / "r.csv")
        json_path = write_report(records, ("method", "estimate"), tmp_path / "r.json", "json")
        assert csv_path.read_text() == "method,estimate\nnaive,1.0\n"
        assert json.loads(json_path.read_text()) == records

    def test_unknown_format(self, tmp_path: Path) -> None:
        """Test formats other than csv and json are rejected."""
        with pytest.raises(ConfigError):
            write_report([], SIMULATION_COLUMNS, tmp_path / "r.xml", "xml")

    def test_missing_values_are_blank(self) -> None:
        """Test absent keys become empty CSV cells."""
        text = render_csv([{"method": "naive"}], ("method", "estimate"))
        assert text.splitlines()[1] == "naive,"


class TestSensitivityTable:
    """Tests for sensitivity_table."""

    def test_failed_rows(self) -> None:
        """Test failed fits are shown with their error."""
        records = [
            {
                "method": "naive",
                "gamma10": None,
                "gamma01": None,
                "term": "1",
                "estimate": 0.25,
                "se": None,
                "ci_low": None,
                "ci_high": None,
            },
            {"method": "mle_corrected", "gamma10": 0.1, "gamma01": 0.0, "error": "boom"},
        ]
        text = _render(sensitivity_table(records))
        assert "0.250" in text
        assert "boom" in text
        assert "(0.1, 0)" in text
        assert set(SENSITIVITY_COLUMNS) >= {"estimate", "ci_low", "ci_high", "error"}

    def test_interval_header_follows_level(self) -> None:
        """Test the interval column is labelled with the configured level."""
        records = [{"method": "naive", "gamma10": None, "gamma01": None, "error": "boom"}]
        assert "90% CI" in _render(sensitivity_table(records, level=0.9))
        assert "95% CI" in _render(sensitivity_table(records))

    def test_flags_column(self) -> None:
        """Test identifiability flags are shown next to the estimate."""
        records = [
            {
                "method": "mle_corrected",
                "gamma10": 0.93,
                "gamma01": 0.91,
                "term": "1",
                "estimate": 0.4,
                "se": None,
                "ci_low": None,
                "ci_high": None,
                "flags": "monotonicity;sparse_validation",
            }
        ]
        text = _render(sensitivity_table(records))
        assert "Flags" in text
        assert "monotonicity;sparse_validation" in text
        assert "flags" in SENSITIVITY_COLUMNS
