"""Port for joint state and parameter estimators."""

from typing import Protocol

import numpy as np

from peiv_estimation.domain.models import EstimatorName, GaussianDensity, IterConfig, JointEstimate, ParamAffineModel


class JointEstimatorPort(Protocol):
    """Estimate θ and the state stack X from one batch of measurements."""

    name: EstimatorName

    def estimate(
        self,
        model: ParamAffineModel,
        Y: np.ndarray,
        prior: GaussianDensity,
        theta_prior: GaussianDensity | None,
        cfg: IterConfig,
    ) -> JointEstimate:
        """Run the estimator; ``theta_prior`` is ignored by methods without a parameter prior."""
        ...
