import numpy as np

from peiv_estimation.adapters.estimators.common import (
    from_smoother,
    initial_theta,
    relative_step,
    require_theta_prior,
)
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EstimatorName, GaussianDensity, IterConfig, JointEstimate, ParamAffineModel
from peiv_estimation.services.batch import assemble
from peiv_estimation.services.parameter import peiv_cost, peiv_step, prior_precision
from peiv_estimation.services.smoother import smooth_rts

logger = get_logger("adapters.peiv")


class PeivEstimator:
    """Partial errors-in-variables (weighted total least squares) estimator.

    Ψ(θ) is uncertain only through θ, and the prior θ̂¹ ~ N(θ°, Σ_θ) enters
    the cost as a regularizer:

        J(θ, X) = ‖θ − θ̂¹‖²_{Σ_θ⁻¹} + ‖Ȳ − Ψ(θ)X‖²_{Σ_η⁻¹}

    The state step is the MAP smoother at fixed θ, the θ-step the closed-form
    regularized solve. The reported covariance is N⁻¹ at the final states.
    """

    name = EstimatorName.PEIV

    def estimate(
        self,
        model: ParamAffineModel,
        Y: np.ndarray,
        prior: GaussianDensity,
        theta_prior: GaussianDensity | None,
        cfg: IterConfig,
    ) -> JointEstimate:
        theta_prior = require_theta_prior(model, theta_prior, "PEIV")
        precision = prior_precision(theta_prior)
        sys = assemble(model, Y, prior)
        theta = initial_theta(model, cfg, theta_prior)
        trace: list[float] = []
        converged = False
        iterations = 0

        for iterations in range(1, cfg.max_iter + 1):
            X = smooth_rts(model, theta, sys.Y, prior).stacked_means
            new_theta, _ = peiv_step(sys, X, theta_prior, precision)
            trace.append(peiv_cost(sys, new_theta, X, theta_prior, precision))
            step = relative_step(theta, new_theta)
            theta = new_theta
            logger.debug("PEIV iteration %d: J=%.10g step=%.3g", iterations, trace[-1], step)
            if step < cfg.tol:
                converged = True
                break

        if not converged:
            logger.warning("PEIV did not converge in %d iterations", cfg.max_iter)
        smoothed = smooth_rts(model, theta, sys.Y, prior)
        _, theta_cov = peiv_step(sys, smoothed.stacked_means, theta_prior, precision)
        return from_smoother(
            self.name,
            theta,
            theta_cov,
            smoothed,
            iterations=iterations,
            converged=converged,
            trace=trace,
        )
