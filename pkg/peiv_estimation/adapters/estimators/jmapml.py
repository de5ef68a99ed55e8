import numpy as np

from peiv_estimation.adapters.estimators.common import from_smoother, initial_theta, relative_step
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EstimatorName, GaussianDensity, IterConfig, JointEstimate, ParamAffineModel
from peiv_estimation.services.batch import assemble
from peiv_estimation.services.parameter import jmap_cost, param_ls
from peiv_estimation.services.smoother import smooth_rts

logger = get_logger("adapters.jmapml")


class JmapMlEstimator:
    """Joint MAP over states, maximum likelihood over θ, by coordinate descent.

    Alternates the MAP smoother at fixed θ with the weighted least-squares
    θ-step at fixed X. Both steps minimize ‖Ȳ − Ψ(θ)X‖²_{Σ_η⁻¹}, so the
    recorded cost never increases.
    """

    name = EstimatorName.JMAP_ML

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
            X = smooth_rts(model, theta, sys.Y, prior).stacked_means
            new_theta, _ = param_ls(sys, X)
            trace.append(jmap_cost(sys, new_theta, X))
            step = relative_step(theta, new_theta)
            theta = new_theta
            logger.debug("JMAP-ML iteration %d: cost=%.10g step=%.3g", iterations, trace[-1], step)
            if step < cfg.tol:
                converged = True
                break

        if not converged:
            logger.warning("JMAP-ML did not converge in %d iterations", cfg.max_iter)
        smoothed = smooth_rts(model, theta, sys.Y, prior)
        _, theta_cov = param_ls(sys, smoothed.stacked_means)
        return from_smoother(
            self.name,
            theta,
            theta_cov,
            smoothed,
            iterations=iterations,
            converged=converged,
            trace=trace,
        )
