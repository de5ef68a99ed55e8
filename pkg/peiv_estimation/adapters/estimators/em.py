import numpy as np

from peiv_estimation.adapters.estimators.common import from_smoother, initial_theta, relative_step
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EstimatorName, GaussianDensity, IterConfig, JointEstimate, ParamAffineModel
from peiv_estimation.services.batch import assemble
from peiv_estimation.services.parameter import em_step
from peiv_estimation.services.smoother import smooth_rts

logger = get_logger("adapters.em")


class EmEstimator:
    """Expectation maximization with an exact E-step.

    The E-step is the RTS smoother at the current θ; its marginal and lag-one
    covariances are all the M-step needs. The trace holds log P(Y | θ) at each
    iterate and is non-decreasing.
    """

    name = EstimatorName.EM

    def estimate(
        self,
        model: ParamAffineModel,
        Y: np.ndarray,
        prior: GaussianDensity,
        theta_prior: GaussianDensity | None,
        cfg: IterConfig,
    ) -> JointEstimate:
        sys = assemble(model, Y, prior)
        theta = initial_theta(model, cfg, theta_prior)
        trace: list[float] = []
        converged = False
        iterations = 0

        for iterations in range(1, cfg.max_iter + 1):
            smoothed = smooth_rts(model, theta, sys.Y, prior)
            trace.append(smoothed.loglik)
            new_theta, _ = em_step(sys, smoothed.stacked_means, smoothed.covs, smoothed.lag1)
            step = relative_step(theta, new_theta)
            theta = new_theta
            logger.debug("EM iteration %d: loglik=%.10g step=%.3g", iterations, trace[-1], step)
            if step < cfg.tol:
                converged = True
                break

        if not converged:
            logger.warning("EM did not converge in %d iterations", cfg.max_iter)
        smoothed = smooth_rts(model, theta, sys.Y, prior)
        _, theta_cov = em_step(sys, smoothed.stacked_means, smoothed.covs, smoothed.lag1)
        return from_smoother(
            self.name,
            theta,
            theta_cov,
            smoothed,
            iterations=iterations,
            converged=converged,
            trace=trace,
        )
