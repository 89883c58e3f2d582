"""Outcome corruption, design matrices and covariate standardization."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from misclass_qlearn.core.errors import DataError, MissingCovariateError, ZeroVarianceError
from misclass_qlearn.core.types import (
    ColumnSpec,
    MisclassRates,
    StageModel,
    StudyDataset,
    Trajectory,
)
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)


def corrupt_outcome(y: int, rates: MisclassRates, draw: float) -> int:
    """
    Misclassify one true outcome given a uniform draw in [0, 1).

    A 0 flips to 1 when ``draw < gamma10``; a 1 flips to 0 when ``draw < gamma01``.
    """
    if y not in (0, 1):
        raise DataError(f"Outcome must be 0 or 1, got {y}")
    if y == 0:
        return 1 if draw < rates.gamma10 else 0
    return 0 if draw < rates.gamma01 else 1


def corrupt_outcomes(
    y: ArrayLike, rates: MisclassRates, draws: ArrayLike
) -> NDArray[np.int64]:
    """Vectorised corrupt_outcome with the same threshold rule."""
    y_arr = np.asarray(y, dtype=np.int64)
    u = np.asarray(draws, dtype=float)
    flip = np.where(y_arr == 0, u < rates.gamma10, u < rates.gamma01)
    return np.where(flip, 1 - y_arr, y_arr)


class StageDesign(NamedTuple):
    """Row-aligned design of one stage: H0 rows, H1 rows and treatments."""

    treatment_free: NDArray[np.float64]
    blip: NDArray[np.float64]
    treatment: NDArray[np.float64]

    @property
    def n_rows(self) -> int:
        return int(self.treatment.shape[0])

    @property
    def full(self) -> NDArray[np.float64]:
        """Regression design ``[H0, H1 * a]``."""
        return np.hstack([self.treatment_free, self.blip * self.treatment[:, None]])

    def take(self, indices: ArrayLike) -> StageDesign:
        idx = np.asarray(indices, dtype=np.intp)
        return StageDesign(self.treatment_free[idx], self.blip[idx], self.treatment[idx])


def build_design_rows(dataset: StudyDataset, model: StageModel, stage: int) -> StageDesign:
    """
    Build the treatment-free matrix, blip matrix and treatment vector of a stage.

    Row i corresponds to trajectory i. Intercepts appear only where a
    column specifier asks for one.

    Raises:
        MissingCovariateError: a trajectory lacks a variable named by a column
    """
    n = dataset.total_count
    h0 = np.empty((n, model.n_treatment_free))
    h1 = np.empty((n, model.n_blip))
    a = np.empty(n)
    for i, traj in enumerate(dataset.trajectories):
        history = traj.history(stage)
        h0[i] = _row(history, model.treatment_free_columns, i)
        h1[i] = _row(history, model.blip_columns, i)
        a[i] = traj.treatment(stage)
    return StageDesign(h0, h1, a)


def _row(history: dict[str, float], columns: Sequence[ColumnSpec], index: int) -> list[float]:
    values = []
    for column in columns:
        try:
            values.append(column.evaluate(history))
        except KeyError as e:
            raise MissingCovariateError(index, column.label, str(e.args[0])) from None
    return values


@dataclass(frozen=True)
class ColumnScaling:
    """Mean and scale used to standardize one column."""

    mean: float
    scale: float

    def apply(self, values: ArrayLike) -> NDArray[np.float64]:
        return (np.asarray(values, dtype=float) - self.mean) / self.scale

    def invert(self, values: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(values, dtype=float) * self.scale + self.mean


def standardize_columns(
    dataset: StudyDataset, columns: Sequence[str]
) -> tuple[StudyDataset, dict[str, ColumnScaling]]:
    """
    Standardize covariates to sample mean 0 and sample SD 1 over the pooled dataset.

    Statistics use validation and main-study rows together.

    Raises:
        ZeroVarianceError: a column is constant
        DataError: a column is not recorded for every trajectory
    """
    scalings: dict[str, ColumnScaling] = {}
    for name in columns:
        values = np.array([_covariate(t, name, i) for i, t in enumerate(dataset.trajectories)])
        if values.size < 2:
            raise ZeroVarianceError(f"Column '{name}' needs at least two values to standardize")
        scale = float(np.std(values, ddof=1))
        if scale == 0.0 or not np.isfinite(scale):
            raise ZeroVarianceError(f"Column '{name}' has zero variance")
        scalings[name] = ColumnScaling(float(np.mean(values)), scale)
        logger.info(f"Standardized '{name}': mean={scalings[name].mean:.4g}, sd={scale:.4g}")

    trajectories = tuple(_rescaled(t, scalings) for t in dataset.trajectories)
    return StudyDataset(trajectories, dataset.validation_count), scalings


def _covariate(traj: Trajectory, name: str, index: int) -> float:
    if name in traj.stage1_covariates:
        return traj.stage1_covariates[name]
    if name in traj.stage2_covariates:
        return traj.stage2_covariates[name]
    raise DataError(f"Trajectory {index} has no covariate '{name}' to standardize")


def _rescaled(traj: Trajectory, scalings: dict[str, ColumnScaling]) -> Trajectory:
    def scale(covariates: dict[str, float]) -> dict[str, float]:
        return {
            k: (v - scalings[k].mean) / scalings[k].scale if k in scalings else v
            for k, v in covariates.items()
        }

    return replace(
        traj,
        stage1_covariates=scale(dict(traj.stage1_covariates)),
        stage2_covariates=scale(dict(traj.stage2_covariates)),
    )
