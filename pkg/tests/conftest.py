import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import yaml

from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel
from peiv_estimation.services.simulation import scalar_benchmark_model, simulate


@dataclass(frozen=True)
class Instance:
    model: ParamAffineModel
    theta: np.ndarray
    Y: np.ndarray
    prior: GaussianDensity


def spd(rng: np.random.Generator, k: int, floor: float = 0.1) -> np.ndarray:
    A = rng.standard_normal((k, k))
    return A @ A.T / k + floor * np.eye(k)


def random_model(rng: np.random.Generator, n: int, m: int, d: int) -> ParamAffineModel:
    return ParamAffineModel(
        n=n,
        m=m,
        d=d,
        F_basis=tuple(0.4 * rng.standard_normal((n, n)) for _ in range(d + 1)),
        H_basis=tuple(rng.standard_normal((m, n)) for _ in range(d + 1)),
        Q=spd(rng, n),
        R=spd(rng, m),
    )


def random_instance(seed: int, n: int, m: int, d: int, N: int) -> Instance:
    rng = np.random.default_rng(seed)
    model = random_model(rng, n, m, d)
    theta = 0.5 * rng.standard_normal(d)
    prior = GaussianDensity(mean=rng.standard_normal(n), cov=spd(rng, n))
    Y = rng.standard_normal((m, N))
    return Instance(model, theta, Y, prior)


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """The CLI installs its own handlers; hand records back to caplog afterwards."""
    yield
    pkg_logger = logging.getLogger("peiv_estimation")
    pkg_logger.handlers.clear()
    pkg_logger.propagate = True
    pkg_logger.setLevel(logging.NOTSET)


@pytest.fixture
def scalar_model() -> ParamAffineModel:
    return scalar_benchmark_model()


@pytest.fixture
def scalar_data(scalar_model: ParamAffineModel) -> Instance:
    """Benchmark model, N=30, x_0 from the stationary distribution."""
    traj = simulate(scalar_model, [0.9], GaussianDensity.scalar(0.0, 0.2 / 0.19), 30, seed=11)
    prior = GaussianDensity.scalar(float(traj.measurements[0, 0]), 2 * 0.2 / 0.19)
    return Instance(scalar_model, np.array([0.9]), np.asarray(traj.measurements), prior)


@pytest.fixture
def theta_prior() -> GaussianDensity:
    return GaussianDensity.scalar(0.8, 0.04)


BENCHMARK_CONFIG = {
    "model": {
        "n": 1,
        "m": 1,
        "d": 1,
        "F_basis": [[[0.0]], [[1.0]]],
        "H_basis": [[[1.0]], [[0.0]]],
        "Q": 0.2,
        "R": 0.09,
    },
    "theta_true": [0.9],
    "theta_prior": {"mean": None, "cov": 0.04},
    "estimator": {"max_iter": 100, "tol": 1e-8, "theta_init": [0.8]},
    "simulation": {"batch_size": 10, "seed": 7},
    "montecarlo": {
        "batch_sizes": [10],
        "replications": 2,
        "seed": 3,
        "methods": ["peiv"],
        "ellipse_batch_size": None,
    },
    "logging": {"level": "WARNING"},
}


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a config dict (benchmark defaults merged with overrides) and return its path."""

    def _write(overrides: dict | None = None, name: str = "config.yml") -> Path:
        raw = yaml.safe_load(yaml.safe_dump(BENCHMARK_CONFIG))
        for key, value in (overrides or {}).items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key].update(value)
            else:
                raw[key] = value
        raw.setdefault("output_dir", str(tmp_path / "results"))
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw), encoding="utf-8")
        return path

    return _write
