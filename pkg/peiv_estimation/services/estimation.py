from dataclasses import dataclass, field

import numpy as np

from peiv_estimation.adapters.estimators.aseks import AseksEstimator
from peiv_estimation.adapters.estimators.em import EmEstimator
from peiv_estimation.adapters.estimators.jmapml import JmapMlEstimator
from peiv_estimation.adapters.estimators.peiv import PeivEstimator
from peiv_estimation.core.errors import ConfigurationError, EstimationError, NumericalFailureError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import EstimatorName, GaussianDensity, IterConfig, JointEstimate, ParamAffineModel
from peiv_estimation.ports.estimator import JointEstimatorPort

logger = get_logger("services.estimation")


def default_estimators() -> dict[EstimatorName, JointEstimatorPort]:
    adapters: list[JointEstimatorPort] = [PeivEstimator(), JmapMlEstimator(), EmEstimator(), AseksEstimator()]
    return {a.name: a for a in adapters}


@dataclass(slots=True)
class EstimationService:
    """Dispatches a named method to its estimator adapter."""

    estimators: dict[EstimatorName, JointEstimatorPort] = field(default_factory=default_estimators)

    def get(self, method: EstimatorName | str) -> JointEstimatorPort:
        try:
            key = EstimatorName(method)
        except ValueError as exc:
            raise ConfigurationError(f"Unknown estimation method: {method!r}") from exc
        if key not in self.estimators:
            raise ConfigurationError(f"No estimator registered for {key.value}")
        return self.estimators[key]

    def estimate(
        self,
        method: EstimatorName | str,
        model: ParamAffineModel,
        Y: np.ndarray,
        prior: GaussianDensity,
        theta_prior: GaussianDensity | None,
        cfg: IterConfig,
    ) -> JointEstimate:
        estimator = self.get(method)
        try:
            result = estimator.estimate(model, Y, prior, theta_prior, cfg)
        except EstimationError as exc:
            logger.debug("%s failed: %s", estimator.name.value, exc)
            raise
        except np.linalg.LinAlgError as exc:
            logger.exception("%s: linear algebra failure", estimator.name.value)
            raise NumericalFailureError(f"{estimator.name.value}: {exc}") from exc
        logger.debug(
            "%s finished: theta=%s iterations=%d converged=%s",
            result.method,
            result.theta_hat,
            result.iterations,
            result.converged,
        )
        return result


def jmap_ml(model: ParamAffineModel, Y: np.ndarray, prior: GaussianDensity, cfg: IterConfig) -> JointEstimate:
    return JmapMlEstimator().estimate(model, Y, prior, None, cfg)


def em(model: ParamAffineModel, Y: np.ndarray, prior: GaussianDensity, cfg: IterConfig) -> JointEstimate:
    return EmEstimator().estimate(model, Y, prior, None, cfg)


def peiv(
    model: ParamAffineModel,
    Y: np.ndarray,
    prior: GaussianDensity,
    theta_prior: GaussianDensity,
    cfg: IterConfig,
) -> JointEstimate:
    return PeivEstimator().estimate(model, Y, prior, theta_prior, cfg)


def aseks(
    model: ParamAffineModel,
    Y: np.ndarray,
    prior: GaussianDensity,
    theta_prior: GaussianDensity,
    cfg: IterConfig,
) -> JointEstimate:
    return AseksEstimator().estimate(model, Y, prior, theta_prior, cfg)
