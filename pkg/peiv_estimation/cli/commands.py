"""Subcommand bodies. Each returns the paths it wrote."""

from pathlib import Path
from typing import Any

from peiv_estimation.cli.schemas import BenchmarkMeta, EstimateOutput, SimulationMeta
from peiv_estimation.core.di import (
    build_iter_config,
    build_mc_config,
    build_model,
    build_state_prior,
    build_theta_prior,
    get_estimation_service,
    get_result_store,
)
from peiv_estimation.core.logger import get_logger
from peiv_estimation.core.settings import ExperimentConfig
from peiv_estimation.domain.models import EstimatorName
from peiv_estimation.services.montecarlo import run_mc
from peiv_estimation.services.simulation import simulate

logger = get_logger("cli.commands")


def resolved(cfg: ExperimentConfig) -> dict[str, Any]:
    """The config with every default materialised, JSON-ready."""
    return cfg.model_dump(mode="json")


def xhat_path_for(out: Path) -> Path:
    return out.with_name(f"{out.stem}.xhat.csv")


def cmd_simulate(cfg: ExperimentConfig, *, seed: int | None = None, out: Path | None = None) -> list[Path]:
    model = build_model(cfg)
    seed = cfg.simulation.seed if seed is None else seed
    out = out or cfg.output_dir / "trajectory.csv"
    N = cfg.simulation.batch_size

    trajectory = simulate(model, cfg.theta_true, build_state_prior(cfg, model), N, seed)
    meta = SimulationMeta(seed=seed, N=N, n=model.n, m=model.m, data_path=str(out), config=resolved(cfg))
    store = get_result_store()
    return [store.save_trajectory(trajectory, out, meta)]


def cmd_estimate(
    cfg: ExperimentConfig,
    *,
    method: EstimatorName,
    data: Path,
    out: Path | None = None,
) -> list[Path]:
    model = build_model(cfg)
    store = get_result_store()
    Y = store.load_measurements(data, model.m)
    out = out or cfg.output_dir / f"estimate_{method.value}.json"

    logger.info("Estimating with %s on %d measurements from %s", method.value, Y.shape[1], data)
    estimate = get_estimation_service().estimate(
        method,
        model,
        Y,
        build_state_prior(cfg, model),
        build_theta_prior(cfg),
        build_iter_config(cfg),
    )
    if not estimate.converged:
        logger.warning("%s stopped after %d iterations without converging", method.value, estimate.iterations)

    xhat_path = store.save_states(estimate.means, xhat_path_for(out))
    payload = EstimateOutput.from_estimate(estimate, xhat_path, resolved(cfg))
    return [store.save_json(payload, out), xhat_path]


def cmd_benchmark(cfg: ExperimentConfig, *, out_dir: Path | None = None, threads: int = 1) -> list[Path]:
    out_dir = out_dir or cfg.output_dir
    report = run_mc(build_mc_config(cfg), threads=threads, service=get_estimation_service())
    return get_result_store().save_report(report, out_dir, BenchmarkMeta.from_report(report, resolved(cfg)))
