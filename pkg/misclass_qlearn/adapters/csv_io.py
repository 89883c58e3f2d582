"""CSV ingestion of observed trajectories and the matching writer."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from misclass_qlearn.core.errors import ConfigError, CsvFormatError
from misclass_qlearn.core.types import StudyDataset, Trajectory
from misclass_qlearn.utils.config import AnalysisConfig
from misclass_qlearn.utils.file_ops import write_file_safe
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

# CSV line of the first data row (the header is line 1).
FIRST_DATA_LINE = 2


def _read_frame(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise CsvFormatError(f"Input file not found: {path}")
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise CsvFormatError(f"Cannot parse {path}: {e}") from e


def _numeric(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        text = raw.iloc[row]
        problem = "missing value" if text == "" else f"cannot parse '{text}' as a number"
        raise CsvFormatError(f"{path}, line {row + FIRST_DATA_LINE}, column '{column}': {problem}")
    return values.to_numpy(dtype=float)


def _binary(frame: pd.DataFrame, column: str, path: Path, what: str) -> np.ndarray:
    values = _numeric(frame, column, path)
    bad = ~np.isin(values, (0.0, 1.0))
    if bad.any():
        row = int(np.argmax(bad))
        raise CsvFormatError(
            f"{path}, line {row + FIRST_DATA_LINE}, column '{column}': "
            f"{what} must be 0 or 1, got '{frame[column].iloc[row].strip()}'"
        )
    return values.astype(np.int64)


def recode_treatment(values: np.ndarray, column: str, path: Path | str = "<data>") -> np.ndarray:
    """
    Map a treatment column onto {-1, +1}.

    {0, 1} coding maps 0 to -1; {-1, +1} coding is kept. A column holding
    only 1 is already valid in both codings.

    Raises:
        CsvFormatError: any other value
    """
    observed = set(np.unique(values).tolist())
    if observed <= {-1.0, 1.0}:
        logger.info(f"Treatment '{column}': values already coded as -1/+1")
        return values.astype(np.int64)
    if observed <= {0.0, 1.0}:
        logger.info(f"Treatment '{column}': recoding 0/1 to -1/+1 (0 -> -1)")
        return np.where(values == 0.0, -1, 1).astype(np.int64)
    allowed = (-1.0, 1.0) if -1.0 in observed else (0.0, 1.0)
    row = int(np.argmax(~np.isin(values, allowed)))
    raise CsvFormatError(
        f"{path}, line {row + FIRST_DATA_LINE}, column '{column}': treatment must be coded "
        f"0/1 or -1/+1, got {values[row]:g} (column holds {sorted(observed)})"
    )


def _covariates(
    columns: Sequence[str], numeric: dict[str, np.ndarray], row: int
) -> dict[str, float]:
    return {name: float(numeric[name][row]) for name in columns}


def ingest_csv(path: Path | str, config: AnalysisConfig) -> StudyDataset:
    """
    Read one trajectory per data row.

    Without a validation column every row joins the main study. With one,
    rows flagged 1 form the validation subset (moved to the front, order
    preserved) and carry their true outcome.

    Raises:
        CsvFormatError: unreadable file, unknown column or invalid value
    """
    path = Path(path)
    frame = _read_frame(path)
    stage1 = config.stage1_covariates()
    stage2 = list(config.stage2_covariate_columns)
    required = [*stage1, *stage2, *config.treatment_columns, config.outcome_column]
    if config.validation_column is not None and config.true_outcome_column is not None:
        required += [config.validation_column, config.true_outcome_column]
    missing = [c for c in dict.fromkeys(required) if c not in frame.columns]
    if missing:
        raise CsvFormatError(
            f"{path}: unknown column(s) {', '.join(repr(c) for c in missing)}; "
            f"header has {', '.join(frame.columns)}"
        )

    numeric = {c: _numeric(frame, c, path) for c in (*stage1, *stage2)}
    treatments = [
        recode_treatment(_numeric(frame, c, path), c, path) for c in config.treatment_columns
    ]
    surrogate = _binary(frame, config.outcome_column, path, "outcome")

    n = len(frame)
    validation = np.zeros(n, dtype=bool)
    true_outcome = np.zeros(n, dtype=np.int64)
    if config.validation_column is not None and config.true_outcome_column is not None:
        validation = _binary(frame, config.validation_column, path, "validation flag") == 1
        true_outcome = _flagged_outcomes(frame, config.true_outcome_column, validation, path)

    two_stage = config.n_stages == 2
    order = [i for i in range(n) if validation[i]] + [i for i in range(n) if not validation[i]]
    trajectories = tuple(
        Trajectory(
            _covariates(stage1, numeric, i),
            int(treatments[0][i]),
            _covariates(stage2, numeric, i) if two_stage else {},
            int(treatments[1][i]) if two_stage else None,
            true_outcome=int(true_outcome[i]) if validation[i] else None,
            surrogate_outcome=int(surrogate[i]),
        )
        for i in order
    )
    n_validation = int(validation.sum())
    logger.info(f"Read {n} rows from {path} ({n_validation} validation rows)")
    return StudyDataset(trajectories, n_validation)


def _flagged_outcomes(
    frame: pd.DataFrame, column: str, validation: np.ndarray, path: Path
) -> np.ndarray:
    """True outcomes of flagged rows; other rows may leave the column blank."""
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = validation & ~np.isin(values, (0.0, 1.0))
    if bad.any():
        row = int(np.argmax(bad))
        raise CsvFormatError(
            f"{path}, line {row + FIRST_DATA_LINE}, column '{column}': "
            f"outcome must be 0 or 1, got '{raw.iloc[row]}'"
        )
    return np.where(validation, np.nan_to_num(values), 0.0).astype(np.int64)


def dataset_frame(dataset: StudyDataset, config: AnalysisConfig) -> pd.DataFrame:
    """Configured columns of a dataset as a frame, treatments coded -1/+1."""
    stage1 = config.stage1_covariates()
    stage2 = list(config.stage2_covariate_columns)
    columns: dict[str, list[float | int | None]] = {c: [] for c in (*stage1, *stage2)}
    treatment_values: list[list[int]] = [[] for _ in config.treatment_columns]
    outcome: list[int | None] = []
    flags: list[int] = []
    truths: list[int | None] = []
    for i, traj in enumerate(dataset.trajectories):
        for name in stage1:
            columns[name].append(traj.stage1_covariates[name])
        for name in stage2:
            columns[name].append(traj.stage2_covariates[name])
        for stage, values in enumerate(treatment_values, start=1):
            values.append(traj.treatment(stage))
        outcome.append(traj.surrogate_outcome)
        in_validation = i < dataset.validation_count
        flags.append(int(in_validation))
        truths.append(traj.true_outcome if in_validation else None)

    data: dict[str, Any] = dict(columns)
    for name, values in zip(config.treatment_columns, treatment_values, strict=True):
        data[name] = values
    data[config.outcome_column] = outcome
    if config.validation_column is not None and config.true_outcome_column is not None:
        data[config.validation_column] = flags
        data[config.true_outcome_column] = truths
    frame = pd.DataFrame(data)
    if config.validation_column is not None and config.true_outcome_column is not None:
        frame[config.true_outcome_column] = frame[config.true_outcome_column].astype("Int64")
    return frame


def write_csv(dataset: StudyDataset, path: Path | str, config: AnalysisConfig) -> Path:
    """
    Write the configured columns so that ingest_csv reads the same dataset back.

    Raises:
        ConfigError: the file cannot be written
    """
    path = Path(path)
    content = dataset_frame(dataset, config).to_csv(index=False, lineterminator="\n")
    if not write_file_safe(path, content):
        raise ConfigError(f"Cannot write {path}")
    return path
