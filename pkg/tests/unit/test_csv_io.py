"""Unit tests for CSV ingestion and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from misclass_qlearn.adapters.csv_io import ingest_csv, recode_treatment, write_csv
from misclass_qlearn.core.errors import CsvFormatError
from misclass_qlearn.utils.config import AnalysisConfig


def _config(path: Path, **extra: object) -> AnalysisConfig:
    values: dict[str, object] = {
        "input_path": path,
        "outcome_column": "y",
        "treatment_columns": ["a"],
        "treatment_free_columns": [["1", "x"]],
        "blip_columns": [["1", "x"]],
        "bootstrap_samples": 0,
    }
    values.update(extra)
    return AnalysisConfig.model_validate(values)


def _write(tmp_path: Path, text: str, name: str = "data.csv") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestRecodeTreatment:
    """Tests for recode_treatment."""

    def test_zero_one(self) -> None:
        """Test 0/1 coding maps 0 to -1."""
        assert recode_treatment(np.array([0.0, 1.0, 0.0]), "a").tolist() == [-1, 1, -1]

    def test_plus_minus_one(self) -> None:
        """Test -1/+1 coding is kept."""
        assert recode_treatment(np.array([-1.0, 1.0]), "a").tolist() == [-1, 1]

    def test_idempotent(self) -> None:
        """Test recoding twice changes nothing."""
        once = recode_treatment(np.array([0.0, 1.0]), "a")
        assert recode_treatment(once.astype(float), "a").tolist() == once.tolist()

    def test_other_values(self) -> None:
        """Test values outside both codings name the line."""
        with pytest.raises(CsvFormatError, match="line 4"):
            recode_treatment(np.array([0.0, 1.0, 2.0]), "a", "data.csv")


class TestIngestCsv:
    """Tests for ingest_csv."""

    def test_three_rows(self, tmp_path: Path) -> None:
        """Test a small file maps onto main-study trajectories."""
        path = _write(tmp_path, "x,a,y\n0.5,1,1\n-1.25,0,0\n2,1,0\n")
        dataset = ingest_csv(path, _config(path))
        assert dataset.total_count == 3
        assert dataset.validation_count == 0
        assert [t.treatment1 for t in dataset] == [1, -1, 1]
        assert [t.stage1_covariates["x"] for t in dataset] == [0.5, -1.25, 2.0]
        assert dataset.surrogate_outcomes().tolist() == [1.0, 0.0, 0.0]

    def test_bad_outcome(self, tmp_path: Path) -> None:
        """Test an outcome of 2 is rejected with its line and column."""
        path = _write(tmp_path, "x,a,y\n0.5,1,1\n-1.25,0,2\n")
        with pytest.raises(CsvFormatError) as excinfo:
            ingest_csv(path, _config(path))
        message = str(excinfo.value)
        assert "line 3" in message
        assert "'y'" in message

    def test_missing_value(self, tmp_path: Path) -> None:
        """Test an empty configured cell is rejected."""
        path = _write(tmp_path, "x,a,y\n,1,1\n")
        with pytest.raises(CsvFormatError, match="missing value"):
            ingest_csv(path, _config(path))

    def test_unparseable_number(self, tmp_path: Path) -> None:
        """Test text in a numeric column is rejected."""
        path = _write(tmp_path, "x,a,y\nabc,1,1\n")
        with pytest.raises(CsvFormatError, match="abc"):
            ingest_csv(path, _config(path))

    def test_unknown_column(self, tmp_path: Path) -> None:
        """Test configured columns must appear in the header."""
        path = _write(tmp_path, "x,trt,y\n0.5,1,1\n")
        with pytest.raises(CsvFormatError, match="'a'"):
            ingest_csv(path, _config(path))

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test a missing input file is a CSV error."""
        path = tmp_path / "missing.csv"
        with pytest.raises(CsvFormatError):
            ingest_csv(path, _config(path))

    def test_extra_columns_are_ignored(self, tmp_path: Path) -> None:
        """Test unconfigured columns may hold anything."""
        path = _write(tmp_path, "id,x,a,y\nP-1,0.5,1,1\n")
        assert ingest_csv(path, _config(path)).total_count == 1

    def test_validation_rows_move_first(self, tmp_path: Path) -> None:
        """Test flagged rows form the validation subset in file order."""
        path = _write(
            tmp_path,
            "x,a,y,v,ytrue\n1,1,1,0,\n2,-1,0,1,1\n3,1,1,0,\n4,-1,1,1,0\n",
        )
        config = _config(path, validation_column="v", true_outcome_column="ytrue")
        dataset = ingest_csv(path, config)
        assert dataset.validation_count == 2
        assert [t.stage1_covariates["x"] for t in dataset] == [2.0, 4.0, 1.0, 3.0]
        assert dataset.true_outcomes().tolist() == [1.0, 0.0]

    def test_flagged_row_needs_true_outcome(self, tmp_path: Path) -> None:
        """Test a validated row with a blank true outcome is rejected."""
        path = _write(tmp_path, "x,a,y,v,ytrue\n1,1,1,1,\n")
        config = _config(path, validation_column="v", true_outcome_column="ytrue")
        with pytest.raises(CsvFormatError, match="ytrue"):
            ingest_csv(path, config)

    def test_two_stage(self, tmp_path: Path) -> None:
        """Test two treatment columns with stage-2 covariates."""
        path = _write(tmp_path, "x,a1,x2,a2,y\n0.1,1,0.2,0,1\n0.3,0,0.4,1,0\n")
        config = _config(
            path,
            treatment_columns=["a1", "a2"],
            treatment_free_columns=[["1", "x"], ["1", "x", "A1", "x2"]],
            blip_columns=[["1"], ["1", "x2"]],
            stage2_covariate_columns=["x2"],
        )
        dataset = ingest_csv(path, config)
        assert dataset.is_two_stage
        assert dataset.trajectories[0].treatment2 == -1
        assert dataset.trajectories[1].stage2_covariates["x2"] == 0.4


class TestWriteCsv:
    """Tests for write_csv."""

    def test_round_trip(self, tmp_path: Path) -> None:
        """Test writing and reading back gives the same dataset."""
        path = _write(
            tmp_path,
            "x,a,y,v,ytrue\n1.5,1,1,0,\n-2.25,0,0,1,1\n0.125,1,1,1,1\n",
        )
        config = _config(path, validation_column="v", true_outcome_column="ytrue")
        original = ingest_csv(path, config)
        copy = write_csv(original, tmp_path / "copy.csv", config)
        again = ingest_csv(copy, config)
        assert again == original
