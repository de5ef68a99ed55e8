"""Model evaluation, stationary covariance and synthetic data generation."""

import numpy as np
from scipy import linalg

from peiv_estimation.core.errors import ContractViolationError, NonStationaryError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel, Trajectory, as_vector

logger = get_logger("services.simulation")

SeedLike = int | np.random.SeedSequence


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator; replication streams do not depend on call order."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seq))


def check_theta(model: ParamAffineModel, theta: np.ndarray | list[float] | float) -> np.ndarray:
    try:
        return as_vector(theta, model.d, "theta")
    except ContractViolationError:
        if model.d == 0 and np.size(theta) == 0:
            return np.zeros(0)
        raise


def eval_f(model: ParamAffineModel, theta: np.ndarray | list[float] | float) -> np.ndarray:
    """F(θ) = F_0 + Σ θ_i F_i."""
    th = check_theta(model, theta)
    F = np.array(model.F_basis[0], dtype=float)
    for i, t in enumerate(th, start=1):
        F += t * model.F_basis[i]
    return F


def eval_h(model: ParamAffineModel, theta: np.ndarray | list[float] | float) -> np.ndarray:
    """H(θ) = H_0 + Σ θ_i H_i."""
    th = check_theta(model, theta)
    H = np.array(model.H_basis[0], dtype=float)
    for i, t in enumerate(th, start=1):
        H += t * model.H_basis[i]
    return H


def gaussian_factor(cov: np.ndarray) -> np.ndarray:
    """Return L with L Lᵀ = cov; zero covariances give an exact zero factor."""
    if not np.any(cov):
        return np.zeros_like(cov, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return np.asarray(vecs * np.sqrt(np.clip(vals, 0.0, None)))


def draw(density: GaussianDensity, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(density.dim)
    return np.asarray(density.mean + gaussian_factor(density.cov) @ z)


def simulate(
    model: ParamAffineModel,
    theta_true: np.ndarray | list[float] | float,
    x0_draw: GaussianDensity,
    N: int,
    seed: SeedLike,
) -> Trajectory:
    """Generate x_0..x_N and y_1..y_N.

    Draw order is fixed (x_0, then process noise, then measurement noise) so a
    seed reproduces the trajectory bit for bit.
    """
    if N < 1:
        raise ContractViolationError(f"N must be >= 1, got {N}")
    if x0_draw.dim != model.n:
        raise ContractViolationError(f"x0 prior has dimension {x0_draw.dim}, model state dimension is {model.n}")
    F = eval_f(model, theta_true)
    H = eval_h(model, theta_true)
    rng = make_rng(seed)

    x0 = draw(x0_draw, rng)
    v = rng.standard_normal((N, model.n)) @ gaussian_factor(model.Q).T
    e = rng.standard_normal((N, model.m)) @ gaussian_factor(model.R).T

    states = np.empty((model.n, N + 1))
    measurements = np.empty((model.m, N))
    states[:, 0] = x0
    for k in range(N):
        states[:, k + 1] = F @ states[:, k] + v[k]
        measurements[:, k] = H @ states[:, k + 1] + e[k]

    logger.debug("Simulated trajectory: N=%d, n=%d, m=%d", N, model.n, model.m)
    return Trajectory(
        states=states,
        measurements=measurements,
        seed=seed if isinstance(seed, int) else None,
    )


def spectral_radius(F: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(F)))) if F.size else 0.0


def stationary_cov(model: ParamAffineModel, theta: np.ndarray | list[float] | float) -> np.ndarray:
    """Solve P = F P Fᵀ + Q for a stable F(θ)."""
    F = eval_f(model, theta)
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise NonStationaryError(f"F(theta) has spectral radius {rho:.6g} >= 1, no stationary covariance")
    P = linalg.solve_discrete_lyapunov(F, np.asarray(model.Q))
    return np.asarray(0.5 * (P + P.T))


def scalar_benchmark_model(q: float = 0.2, r: float = 0.09) -> ParamAffineModel:
    """x_{k+1} = θ x_k + v_k, y_k = x_k + e_k."""
    return ParamAffineModel(
        n=1,
        m=1,
        d=1,
        F_basis=(np.zeros((1, 1)), np.ones((1, 1))),
        H_basis=(np.ones((1, 1)), np.zeros((1, 1))),
        Q=np.array([[q]]),
        R=np.array([[r]]),
    )


def stack_states(means: np.ndarray) -> np.ndarray:
    """n×(N+1) matrix → state stack [x_0; x_1; …; x_N]."""
    return np.asarray(np.asarray(means, dtype=float).T.reshape(-1))


def unstack_states(X: np.ndarray, n: int) -> np.ndarray:
    """State stack → n×(N+1) matrix."""
    X = np.asarray(X, dtype=float).reshape(-1)
    if X.size % n:
        raise ContractViolationError(f"state stack length {X.size} is not a multiple of n={n}")
    return np.asarray(X.reshape(-1, n).T)
