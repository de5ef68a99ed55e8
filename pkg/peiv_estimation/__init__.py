"""Joint state and parameter estimation for parameter-affine linear Gaussian state-space models."""

from peiv_estimation.domain.models import (
    EstimatorName,
    GaussianDensity,
    IterConfig,
    JointEstimate,
    McConfig,
    McReport,
    ParamAffineModel,
    SmoothResult,
    Trajectory,
)
from peiv_estimation.services.estimation import EstimationService, aseks, em, jmap_ml, peiv
from peiv_estimation.services.montecarlo import run_mc
from peiv_estimation.services.simulation import eval_f, eval_h, simulate, stationary_cov
from peiv_estimation.services.smoother import loglik, smooth_batch, smooth_rts

__all__ = [
    "EstimationService",
    "EstimatorName",
    "GaussianDensity",
    "IterConfig",
    "JointEstimate",
    "McConfig",
    "McReport",
    "ParamAffineModel",
    "SmoothResult",
    "Trajectory",
    "aseks",
    "em",
    "eval_f",
    "eval_h",
    "jmap_ml",
    "loglik",
    "peiv",
    "run_mc",
    "simulate",
    "smooth_batch",
    "smooth_rts",
    "stationary_cov",
]
