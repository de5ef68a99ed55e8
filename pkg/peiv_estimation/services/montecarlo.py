"""Seeded Monte Carlo benchmark over batch sizes and estimators.

Replication r at batch size N draws everything from
``SeedSequence(seed, spawn_key=(N, r))``, so the report depends only on the
configuration and never on how replications are scheduled. Replications run
inline for one worker and in a process pool otherwise.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from peiv_estimation.core.errors import EstimationError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import (
    EllipseSummary,
    EstimatorName,
    GaussianDensity,
    IterConfig,
    McConfig,
    McReport,
    MethodSummary,
)
from peiv_estimation.services.estimation import EstimationService
from peiv_estimation.services.simulation import draw, eval_h, make_rng, simulate, stationary_cov
from peiv_estimation.services.statistics import error_ellipse, quantiles, rmse

logger = get_logger("services.montecarlo")


@dataclass(frozen=True, slots=True)
class Outcome:
    """One method on one replication; ``None`` fields mark a failed run."""

    theta_error: np.ndarray | None
    x0_error: np.ndarray | None
    theta_cov: np.ndarray | None

    @property
    def failed(self) -> bool:
        return self.theta_error is None


@dataclass(frozen=True, slots=True)
class Replication:
    N: int
    index: int
    outcomes: dict[EstimatorName, Outcome]


def replication_seed(seed: int, N: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(N, r))


def state_prior(cfg: McConfig, theta_init: np.ndarray, y1: np.ndarray, P_stat: np.ndarray) -> GaussianDensity:
    """N(H(θ̂¹)⁺y₁, prior_scale·P): the prior is built from data, not from x₀."""
    H = eval_h(cfg.model, theta_init)
    return GaussianDensity(mean=np.linalg.pinv(H) @ y1, cov=cfg.prior_scale * P_stat)


def run_replication(
    cfg: McConfig,
    N: int,
    r: int,
    P_stat: np.ndarray,
    service: EstimationService,
) -> Replication:
    sim_seq, prior_seq = replication_seed(cfg.seed, N, r).spawn(2)
    model = cfg.model
    x0_draw = GaussianDensity(mean=np.zeros(model.n), cov=P_stat)
    traj = simulate(model, cfg.theta_true, x0_draw, N, sim_seq)
    theta_init = draw(GaussianDensity(mean=cfg.theta_true, cov=cfg.sigma_theta), make_rng(prior_seq))

    y1 = traj.measurements[:, 0]
    if not cfg.reuse_first_measurement:
        traj = traj.window(1)
    prior = state_prior(cfg, theta_init, y1, P_stat)
    theta_prior = GaussianDensity(mean=theta_init, cov=cfg.sigma_theta)
    iter_cfg = IterConfig(
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        theta_init=theta_init,
        aseks_param_noise=cfg.aseks_param_noise,
    )

    outcomes: dict[EstimatorName, Outcome] = {}
    x0_true = traj.states[:, 0]
    for method in cfg.methods:
        try:
            est = service.estimate(method, model, traj.measurements, prior, theta_prior, iter_cfg)
        except EstimationError:
            outcomes[method] = Outcome(None, None, None)
            continue
        outcomes[method] = Outcome(
            theta_error=est.theta_hat - cfg.theta_true,
            x0_error=est.x0_hat - x0_true,
            theta_cov=est.theta_cov,
        )
    return Replication(N=N, index=r, outcomes=outcomes)


ReplicationTask = tuple[McConfig, int, int, np.ndarray, EstimationService]


def _replication_task(task: ReplicationTask) -> Replication:
    """Module-level so the process pool can pickle it."""
    cfg, N, r, P_stat, service = task
    return run_replication(cfg, N, r, P_stat, service)


def _replications(
    cfg: McConfig,
    N: int,
    P_stat: np.ndarray,
    service: EstimationService,
    pool: ProcessPoolExecutor | None,
    workers: int,
) -> list[Replication]:
    tasks = [(cfg, N, r, P_stat, service) for r in range(cfg.M)]
    if pool is None:
        reps = [_replication_task(task) for task in tasks]
    else:
        reps = list(pool.map(_replication_task, tasks, chunksize=max(1, cfg.M // (4 * workers))))
    return sorted(reps, key=lambda rep: rep.index)


def summarize(cfg: McConfig, method: EstimatorName, N: int, reps: list[Replication]) -> MethodSummary:
    d = cfg.model.d
    ok = [rep.outcomes[method] for rep in reps if not rep.outcomes[method].failed]
    failures = len(reps) - len(ok)
    if not ok:
        nan_d = np.full(d, np.nan)
        return MethodSummary(
            method=method,
            N=N,
            m_effective=0,
            failures=failures,
            rmse_theta=float("nan"),
            rmse_x0=float("nan"),
            q05=nan_d,
            q95=nan_d,
            bias_theta=nan_d,
            var_theta=nan_d,
            mean_theta_cov=np.full((d, d), np.nan),
        )
    theta_err = np.array([o.theta_error for o in ok]).reshape(len(ok), d)
    x0_err = np.array([o.x0_error for o in ok])
    theta_hat = theta_err + cfg.theta_true
    q = quantiles(theta_hat, [0.05, 0.95]) if d else np.zeros((2, 0))
    return MethodSummary(
        method=method,
        N=N,
        m_effective=len(ok),
        failures=failures,
        rmse_theta=rmse(theta_err) if d else 0.0,
        rmse_x0=rmse(x0_err),
        q05=np.asarray(q[0]),
        q95=np.asarray(q[1]),
        bias_theta=theta_err.mean(axis=0),
        var_theta=theta_err.var(axis=0),
        mean_theta_cov=np.mean(np.array([o.theta_cov for o in ok]), axis=0).reshape(d, d),
    )


def ellipse_for(cfg: McConfig, method: EstimatorName, reps: list[Replication]) -> EllipseSummary | None:
    """(x̃₀, θ̃) ellipse from the first state and parameter components."""
    ok = [rep.outcomes[method] for rep in reps if not rep.outcomes[method].failed]
    if cfg.model.d == 0 or len(ok) < 3:
        logger.warning("Skipping error ellipse for %s: %d successful replications", method.value, len(ok))
        return None
    samples = np.array([[o.x0_error[0], o.theta_error[0]] for o in ok])  # type: ignore[index]
    return error_ellipse(samples, cfg.confidence)


def run_mc(cfg: McConfig, *, threads: int = 1, service: EstimationService | None = None) -> McReport:
    """Run every method on M replications per batch size and aggregate.

    ``threads`` is the number of worker processes; the estimators are GIL-bound
    numpy loops, so parallel work goes to a process pool. Failed runs are
    counted per (method, N) and left out of every statistic.
    """
    service = service or EstimationService()
    workers = max(1, threads)
    P_stat = stationary_cov(cfg.model, cfg.theta_true)
    summaries: list[MethodSummary] = []
    ellipses: dict[EstimatorName, EllipseSummary] = {}
    logger.info(
        "Monte Carlo run: batch_sizes=%s M=%d methods=%s workers=%d",
        list(cfg.batch_sizes),
        cfg.M,
        [m.value for m in cfg.methods],
        workers,
    )

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for N in cfg.batch_sizes:
            reps = _replications(cfg, N, P_stat, service, pool, workers)
            for method in cfg.methods:
                row = summarize(cfg, method, N, reps)
                summaries.append(row)
                logger.info(
                    "N=%d %s: rmse_theta=%.6g rmse_x0=%.6g failures=%d",
                    N,
                    method.value,
                    row.rmse_theta,
                    row.rmse_x0,
                    row.failures,
                )
                if N == cfg.ellipse_batch_size:
                    ellipse = ellipse_for(cfg, method, reps)
                    if ellipse is not None:
                        ellipses[method] = ellipse
    finally:
        if pool is not None:
            pool.shutdown()

    return McReport(config=cfg, summaries=tuple(summaries), ellipses=ellipses)
