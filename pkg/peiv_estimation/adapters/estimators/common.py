"""Helpers shared by the coordinate-iteration estimators."""

import numpy as np

from peiv_estimation.core.errors import ConfigurationError
from peiv_estimation.domain.models import (
    EstimatorName,
    GaussianDensity,
    IterConfig,
    JointEstimate,
    ParamAffineModel,
    SmoothResult,
)
from peiv_estimation.services.simulation import check_theta


def relative_step(old: np.ndarray, new: np.ndarray) -> float:
    """‖θ_new − θ_old‖ / (1 + ‖θ_old‖)."""
    return float(np.linalg.norm(new - old) / (1.0 + np.linalg.norm(old)))


def initial_theta(
    model: ParamAffineModel,
    cfg: IterConfig,
    theta_prior: GaussianDensity | None = None,
) -> np.ndarray:
    """``cfg.theta_init`` if set, else the prior mean."""
    if cfg.theta_init is not None:
        return check_theta(model, cfg.theta_init)
    if theta_prior is not None:
        return check_theta(model, theta_prior.mean)
    if model.d == 0:
        return np.zeros(0)
    raise ConfigurationError("theta_init is required when no parameter prior is given")


def require_theta_prior(model: ParamAffineModel, theta_prior: GaussianDensity | None, method: str) -> GaussianDensity:
    if theta_prior is None:
        if model.d == 0:
            return GaussianDensity(mean=np.zeros(0), cov=np.zeros((0, 0)))
        raise ConfigurationError(f"{method} needs a parameter prior")
    if theta_prior.dim != model.d:
        raise ConfigurationError(f"parameter prior has dimension {theta_prior.dim}, model has d={model.d}")
    return theta_prior


def from_smoother(
    method: EstimatorName,
    theta: np.ndarray,
    theta_cov: np.ndarray,
    smoothed: SmoothResult,
    *,
    iterations: int,
    converged: bool,
    trace: list[float],
    theta_initial_time: np.ndarray | None = None,
) -> JointEstimate:
    return JointEstimate(
        method=method.value,
        theta_hat=np.asarray(theta, dtype=float),
        theta_cov=np.asarray(theta_cov, dtype=float),
        Xhat=smoothed.stacked_means,
        state_covs=smoothed.covs,
        iterations=iterations,
        converged=converged,
        objective_trace=tuple(float(v) for v in trace),
        loglik=smoothed.loglik,
        theta_initial_time=np.asarray(theta if theta_initial_time is None else theta_initial_time, dtype=float),
    )
