"""Pytest configuration and fixtures."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from misclass_qlearn.core.mislik import OutcomeData, outcome_data
from misclass_qlearn.core.simulation import (
    ONE_STAGE_TRUTH,
    generate_one_stage,
    generate_two_stage,
    split_validation,
)
from misclass_qlearn.core.types import MisclassRates, StudyDataset, Trajectory
from misclass_qlearn.utils.config import AnalysisConfig, get_settings


@pytest.fixture(autouse=True)
def clear_settings_cache(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep MQL_* variables of the calling shell out of the tests."""
    for name in ("MQL_THREADS", "MQL_LOG_LEVEL", "MQL_OUTPUT_FORMAT", "MQL_BOOTSTRAP_SAMPLES"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed-seed generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def one_stage_dataset() -> StudyDataset:
    """400 one-stage trajectories, rates (0.2, 0.2), half of them validated."""
    full = generate_one_stage(400, MisclassRates(0.2, 0.2), np.random.default_rng(7))
    return split_validation(full, 0.5, np.random.default_rng(8))


@pytest.fixture
def two_stage_dataset() -> StudyDataset:
    """600 two-stage trajectories, rates (0.1, 0.1), half of them validated."""
    full = generate_two_stage(600, MisclassRates(0.1, 0.1), np.random.default_rng(11))
    return split_validation(full, 0.5, np.random.default_rng(12))


@pytest.fixture
def one_stage_data(one_stage_dataset: StudyDataset) -> OutcomeData:
    """Likelihood inputs of the one-stage fixture dataset."""
    return outcome_data(one_stage_dataset, ONE_STAGE_TRUTH, 1)


@pytest.fixture
def tiny_dataset() -> StudyDataset:
    """Six hand-written trajectories: three validated, three main-study."""
    rows = [
        ({"X": 0.5, "Z": 1.0}, 1, 1, 1),
        ({"X": -1.0, "Z": -1.0}, -1, 0, 0),
        ({"X": 1.5, "Z": 1.0}, -1, 0, 1),
        ({"X": 0.0, "Z": -1.0}, 1, None, 1),
        ({"X": 2.0, "Z": 1.0}, 1, None, 0),
        ({"X": -0.5, "Z": -1.0}, -1, None, 0),
    ]
    trajectories = tuple(
        Trajectory(cov, a, true_outcome=y, surrogate_outcome=ys) for cov, a, y, ys in rows
    )
    return StudyDataset(trajectories, validation_count=3)


@pytest.fixture
def analysis_csv(tmp_path: Path) -> Path:
    """Small one-stage CSV with 0/1 treatment coding and no validation column."""
    dataset = generate_one_stage(300, MisclassRates(0.05, 0.0), np.random.default_rng(21))
    lines = ["x,z,trt,y"]
    for traj in dataset:
        a = 1 if traj.treatment1 == 1 else 0
        lines.append(
            f"{traj.stage1_covariates['X']!r},{int(traj.stage1_covariates['Z'])},"
            f"{a},{traj.surrogate_outcome}"
        )
    path = tmp_path / "study.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def analysis_config(analysis_csv: Path) -> AnalysisConfig:
    """One-stage analysis of the analysis_csv fixture with two fixed-rate grid points."""
    return AnalysisConfig(
        input_path=analysis_csv,
        outcome_column="y",
        treatment_columns=["trt"],
        treatment_free_columns=[["1", "z", "x"]],
        blip_columns=[["1", "x"]],
        standardize_columns=["x"],
        gamma_grid=[(0.0, 0.0), (0.05, 0.0)],
        bootstrap_samples=0,
        seed=3,
    )


@pytest.fixture
def analysis_config_file(tmp_path: Path, analysis_csv: Path) -> Path:
    """YAML version of analysis_config with a relative input path."""
    path = tmp_path / "analysis.yaml"
    path.write_text(
        f"""analysis:
  input_path: {analysis_csv.name}
  outcome_column: y
  treatment_columns: [trt]
  treatment_free_columns:
    - ["1", z, x]
  blip_columns:
    - ["1", x]
  standardize_columns: [x]
  gamma_grid:
    - [0.0, 0.0]
    - [0.05, 0.0]
  bootstrap_samples: 0
  seed: 3
""",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def simulation_config_file(tmp_path: Path) -> Path:
    """Minimal one-stage simulation config."""
    path = tmp_path / "sim.yaml"
    path.write_text(
        """simulation:
  scenario: one_stage
  n: 500
  rho: 0.5
  gamma10: 0.1
  gamma01: 0.1
  replications: 10
  seed: 1
""",
        encoding="utf-8",
    )
    return path
