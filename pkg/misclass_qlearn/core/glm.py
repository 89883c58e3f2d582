"""Logistic regression by IRLS and least squares by pivoted QR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, log_expit

from misclass_qlearn.core.errors import DataError, DimensionError, RankDeficiencyError
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

SCORE_TOLERANCE = 1e-8
MAX_ITERATIONS = 100
RANK_TOLERANCE = 1e-10
# Fits with a linear predictor beyond this are checked for separation.
SEPARATION_ETA = 15.0
SEPARATION_NORM = 1e3


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Result of a logistic regression fit."""

    coefficients: NDArray[np.float64]
    converged: bool
    iterations: int
    max_abs_score: float
    separation_flag: bool
    log_likelihood: float


def check_full_rank(design: NDArray[np.float64]) -> int:
    """
    Verify full column rank with a column-pivoted QR decomposition.

    A diagonal entry of R counts toward the rank when it exceeds
    RANK_TOLERANCE times the largest one.

    Returns:
        The rank (equal to the number of columns)

    Raises:
        RankDeficiencyError: rank below the number of columns
    """
    n, p = design.shape
    if p == 0:
        return 0
    if n == 0:
        raise RankDeficiencyError(0, p)
    r = scipy.linalg.qr(design, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < p:
        raise RankDeficiencyError(rank, p)
    return rank


def is_separated(design: ArrayLike, response: ArrayLike) -> bool:
    """
    Exact check for complete or quasi-complete separation.

    Solves the linear program max sum_i s_i x_i d subject to s_i x_i d >= 0 and
    -1 <= d <= 1, with s_i = 2 y_i - 1. A positive optimum means some direction
    never worsens any fitted row, so the MLE does not exist.
    """
    x, y = _validate(design, response)
    signed = x * (2.0 * y - 1.0)[:, None]
    scale = float(np.abs(signed).sum())
    if scale == 0.0:
        return False
    result = scipy.optimize.linprog(
        -signed.sum(axis=0),
        A_ub=-signed,
        b_ub=np.zeros(x.shape[0]),
        bounds=[(-1.0, 1.0)] * x.shape[1],
        method="highs",
    )
    if result.status != 0:
        logger.debug(f"Separation check did not solve: {result.message}")
        return False
    return bool(-result.fun > 1e-6 * scale)


def bernoulli_log_likelihood(
    design: ArrayLike, response: ArrayLike, coefficients: ArrayLike
) -> float:
    """Bernoulli log-likelihood with logit link."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    eta = x @ np.asarray(coefficients, dtype=float)
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def _validate(
    design: ArrayLike, response: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).reshape(-1)
    if x.ndim != 2:
        raise DimensionError(f"Design must be a matrix, got shape {x.shape}")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"Design has {x.shape[0]} rows but response has {y.shape[0]}")
    return x, y


def fit_logistic(
    design: ArrayLike,
    response: ArrayLike,
    *,
    tolerance: float = SCORE_TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
) -> GlmFit:
    """
    Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Each Newton step is halved until the log-likelihood does not decrease.
    Convergence means the max-abs score entry is at most ``tolerance``.
    Non-convergence is reported in the result, not raised.

    Raises:
        RankDeficiencyError: the design lacks full column rank
        DataError: the response is not binary
    """
    x, y = _validate(design, response)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("Logistic response must be binary (0/1)")
    check_full_rank(x)

    beta = np.zeros(x.shape[1])
    eta = x @ beta
    loglik = bernoulli_log_likelihood(x, y, beta)
    separation = False
    converged = False
    iterations = 0
    score = x.T @ (y - expit(eta))

    while iterations < max_iterations:
        if np.max(np.abs(score), initial=0.0) <= tolerance:
            converged = True
            break
        p = expit(eta)
        weights = p * (1.0 - p)
        information = x.T @ (x * weights[:, None])
        try:
            step = scipy.linalg.solve(information, score, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = scipy.linalg.lstsq(information, score)[0]

        t = 1.0
        while True:
            candidate = beta + t * step
            cand_eta = x @ candidate
            cand_loglik = bernoulli_log_likelihood(x, y, candidate)
            if cand_loglik >= loglik - 1e-12 * abs(loglik) or t < 1e-10:
                break
            t *= 0.5

        beta, eta, loglik = candidate, cand_eta, cand_loglik
        iterations += 1
        score = x.T @ (y - expit(eta))

        if np.linalg.norm(beta) > SEPARATION_NORM:
            break
    else:
        converged = bool(np.max(np.abs(score), initial=0.0) <= tolerance)

    suspect = (
        not converged
        or np.linalg.norm(beta) > SEPARATION_NORM
        or np.max(np.abs(eta), initial=0.0) > SEPARATION_ETA
    )
    if suspect:
        separation = is_separated(x, y)

    max_abs_score = float(np.max(np.abs(score), initial=0.0))
    if separation:
        logger.warning(
            f"Logistic fit shows (quasi-)complete separation after {iterations} iterations"
        )
    elif not converged:
        logger.warning(
            f"Logistic fit did not converge in {max_iterations} iterations "
            f"(max |score| = {max_abs_score:.3g})"
        )
    return GlmFit(
        coefficients=beta,
        converged=converged and not separation,
        iterations=iterations,
        max_abs_score=max_abs_score,
        separation_flag=separation,
        log_likelihood=loglik,
    )


def fit_ols(design: ArrayLike, response: ArrayLike) -> NDArray[np.float64]:
    """
    Ordinary least squares through a column-pivoted QR decomposition.

    Raises:
        RankDeficiencyError: the design lacks full column rank
    """
    x, y = _validate(design, response)
    n, p = x.shape
    if n < p or n == 0:
        raise RankDeficiencyError(min(n, p), p)
    q, r, perm = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if diag[0] > 0 else 0
    if rank < p:
        raise RankDeficiencyError(rank, p)
    solution = scipy.linalg.solve_triangular(r, q.T @ y)
    coefficients = np.empty(p)
    coefficients[perm] = solution
    return coefficients
