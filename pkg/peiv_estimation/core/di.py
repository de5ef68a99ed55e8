from functools import lru_cache

import numpy as np

from peiv_estimation.adapters.storage.csvstore import CsvResultStore
from peiv_estimation.core.errors import ConfigurationError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.core.settings import ExperimentConfig
from peiv_estimation.domain.models import GaussianDensity, IterConfig, McConfig, ParamAffineModel, as_matrix
from peiv_estimation.ports.storage import ResultStoragePort
from peiv_estimation.services.estimation import EstimationService
from peiv_estimation.services.simulation import stationary_cov

logger = get_logger("core.di")


def build_model(cfg: ExperimentConfig) -> ParamAffineModel:
    model_cfg = cfg.model
    return ParamAffineModel(
        n=model_cfg.n,
        m=model_cfg.m,
        d=model_cfg.d,
        F_basis=tuple(np.asarray(F, dtype=float) for F in model_cfg.F_basis),
        H_basis=tuple(np.asarray(H, dtype=float) for H in model_cfg.H_basis),
        Q=np.asarray(model_cfg.Q, dtype=float),
        R=np.asarray(model_cfg.R, dtype=float),
    )


def build_state_prior(cfg: ExperimentConfig, model: ParamAffineModel | None = None) -> GaussianDensity:
    """Configured x_0 prior, or N(0, P_stationary(θ_true)) when none is given."""
    model = model or build_model(cfg)
    if cfg.prior is not None:
        return GaussianDensity(mean=np.asarray(cfg.prior.mean), cov=as_matrix(cfg.prior.cov, model.n, model.n, "prior.cov"))
    logger.info("No state prior configured, using the stationary distribution at theta_true")
    return GaussianDensity(mean=np.zeros(model.n), cov=stationary_cov(model, cfg.theta_true))


def build_theta_prior(cfg: ExperimentConfig) -> GaussianDensity:
    """θ̂¹ ~ N(mean, Σ_θ); mean falls back to theta_init, then to theta_true."""
    d = cfg.model.d
    if cfg.theta_prior.mean is not None:
        mean = cfg.theta_prior.mean
    elif cfg.estimator.theta_init is not None:
        mean = cfg.estimator.theta_init
    else:
        mean = cfg.theta_true
    cov = as_matrix(cfg.theta_prior.cov, d, d, "theta_prior.cov")
    try:
        return GaussianDensity(mean=np.asarray(mean, dtype=float), cov=cov)
    except ConfigurationError as exc:
        raise ConfigurationError(f"theta_prior: {exc}") from exc


def build_iter_config(cfg: ExperimentConfig) -> IterConfig:
    est = cfg.estimator
    return IterConfig(
        max_iter=est.max_iter,
        tol=est.tol,
        theta_init=None if est.theta_init is None else np.asarray(est.theta_init),
        aseks_param_noise=est.aseks_param_noise,
    )


def build_mc_config(cfg: ExperimentConfig) -> McConfig:
    mc = cfg.montecarlo
    model = build_model(cfg)
    return McConfig(
        model=model,
        theta_true=np.asarray(cfg.theta_true, dtype=float),
        sigma_theta=as_matrix(cfg.theta_prior.cov, model.d, model.d, "theta_prior.cov"),
        batch_sizes=tuple(mc.batch_sizes),
        M=mc.replications,
        seed=mc.seed,
        methods=tuple(mc.methods),
        max_iter=cfg.estimator.max_iter,
        tol=cfg.estimator.tol,
        aseks_param_noise=cfg.estimator.aseks_param_noise,
        ellipse_batch_size=mc.ellipse_batch_size,
        confidence=mc.confidence,
        reuse_first_measurement=mc.reuse_first_measurement,
        prior_scale=mc.prior_scale,
    )


@lru_cache(maxsize=1)
def get_estimation_service() -> EstimationService:
    """Get singleton EstimationService."""
    return EstimationService()


@lru_cache(maxsize=1)
def get_result_store() -> ResultStoragePort:
    """Get singleton result store."""
    return CsvResultStore()
