"""Sample statistics for the Monte Carlo report."""

from collections.abc import Sequence

import numpy as np
from scipy import stats

from peiv_estimation.core.errors import ContractViolationError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EllipseSummary

logger = get_logger("services.statistics")


def quantiles(samples: Sequence[float] | np.ndarray, probs: Sequence[float] | np.ndarray | float) -> np.ndarray:
    """Linear-interpolation sample quantiles along the first axis."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ContractViolationError("quantiles of an empty sample")
    p = np.asarray(probs, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ContractViolationError(f"probabilities must lie in [0, 1], got {p}")
    return np.asarray(np.quantile(arr, p, axis=0, method="linear"))


def rmse(errors: Sequence[float] | np.ndarray) -> float:
    """sqrt(mean ‖e‖²) over the rows of ``errors`` (scalars count as 1-vectors)."""
    arr = np.asarray(errors, dtype=float)
    if arr.size == 0:
        raise ContractViolationError("rmse of an empty sample")
    arr = arr.reshape(arr.shape[0], -1)
    return float(np.sqrt(np.mean(np.sum(arr * arr, axis=1))))


def error_ellipse(samples: Sequence[Sequence[float]] | np.ndarray, confidence: float = 0.95) -> EllipseSummary:
    """Sample-mean center, sample covariance and χ²₂ radius of a 2-D error cloud."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ContractViolationError(f"error_ellipse expects k×2 samples, got shape {arr.shape}")
    if arr.shape[0] < 3:
        raise ContractViolationError(f"error_ellipse needs at least 3 samples, got {arr.shape[0]}")
    if not 0.0 < confidence < 1.0:
        raise ContractViolationError(f"confidence must lie in (0, 1), got {confidence}")

    center = arr.mean(axis=0)
    cov = np.cov(arr, rowvar=False, ddof=1)
    degenerate = bool(np.linalg.matrix_rank(cov) < 2)
    if degenerate:
        logger.warning("Error covariance is rank deficient; ellipse collapses to a segment or point")
    return EllipseSummary(
        center=center,
        cov=cov,
        radius_scale=float(stats.chi2.ppf(confidence, df=2)),
        confidence=confidence,
        degenerate=degenerate,
    )


def contains(ellipse: EllipseSummary, points: np.ndarray) -> np.ndarray:
    """Boolean mask of points with Mahalanobis distance² <= radius_scale."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    delta = pts - ellipse.center
    dist = np.einsum("ki,ij,kj->k", delta, np.linalg.pinv(ellipse.cov), delta)
    return np.asarray(dist <= ellipse.radius_scale)
