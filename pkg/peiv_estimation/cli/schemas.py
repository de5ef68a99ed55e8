from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from peiv_estimation.domain.models import JointEstimate, McReport


def _finite_or_none(value: float) -> float | None:
    return float(value) if np.isfinite(value) else None


class SimulationMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    N: int
    n: int
    m: int
    data_path: str
    config: dict[str, Any]


class EstimateOutput(BaseModel):
    """JSON document written by ``peiv estimate``."""

    model_config = ConfigDict(extra="forbid")

    method: str
    theta_hat: list[float]
    theta_cov: list[list[float]]
    theta_initial_time: list[float]
    iterations: int
    converged: bool
    loglik: float | None
    objective_trace: list[float | None]
    xhat_path: str
    config: dict[str, Any]

    @classmethod
    def from_estimate(cls, estimate: JointEstimate, xhat_path: Path, config: dict[str, Any]) -> "EstimateOutput":
        initial = estimate.theta_hat if estimate.theta_initial_time is None else estimate.theta_initial_time
        return cls(
            method=estimate.method,
            theta_hat=[float(v) for v in estimate.theta_hat],
            theta_cov=np.asarray(estimate.theta_cov, dtype=float).tolist(),
            theta_initial_time=[float(v) for v in initial],
            iterations=estimate.iterations,
            converged=estimate.converged,
            loglik=_finite_or_none(estimate.loglik),
            objective_trace=[_finite_or_none(v) for v in estimate.objective_trace],
            xhat_path=str(xhat_path),
            config=config,
        )


class BenchmarkMeta(BaseModel):
    """Resolved benchmark settings written next to rmse.csv."""

    model_config = ConfigDict(extra="forbid")

    seed: int
    replications: int
    batch_sizes: list[int]
    methods: list[str]
    theta_true: list[float]
    sigma_theta: list[list[float]]
    confidence: float
    ellipse_batch_size: int | None
    reuse_first_measurement: bool
    prior_scale: float
    config: dict[str, Any]

    @classmethod
    def from_report(cls, report: McReport, config: dict[str, Any]) -> "BenchmarkMeta":
        mc = report.config
        return cls(
            seed=mc.seed,
            replications=mc.M,
            batch_sizes=list(mc.batch_sizes),
            methods=[m.value for m in mc.methods],
            theta_true=[float(v) for v in mc.theta_true],
            sigma_theta=np.asarray(mc.sigma_theta, dtype=float).tolist(),
            confidence=mc.confidence,
            ellipse_batch_size=mc.ellipse_batch_size,
            reuse_first_measurement=mc.reuse_first_measurement,
            prior_scale=mc.prior_scale,
            config=config,
        )
