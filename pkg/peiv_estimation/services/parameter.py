"""Parameter step of the coordinate iterations.

Everything here works on the linear-in-θ form Ψ(θ)X = Φ(X)θ + c(X), so each
θ-update is a (possibly regularized) weighted least-squares solve of size d.
"""

import numpy as np
from scipy import linalg

from peiv_estimation.core.errors import ConfigurationError, UnidentifiableError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import GaussianDensity
from peiv_estimation.services.batch import (
    BatchSystem,
    apply_psi,
    regressor_phi,
    trace_product,
    weigh,
    weighted_norm,
)
from peiv_estimation.services.linalg import symmetrize

logger = get_logger("services.parameter")

_RANK_RTOL = 1e-12


def normal_terms(sys: BatchSystem, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ΦᵀΣ_η⁻¹Φ and ΦᵀΣ_η⁻¹(Ȳ − c) at the state stack X."""
    Phi, c = regressor_phi(sys, X)
    WPhi = weigh(sys, Phi)
    return symmetrize(Phi.T @ WPhi), WPhi.T @ (sys.Ybar - c)


def _solve_information(info: np.ndarray, score: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    d = info.shape[0]
    scale = max(float(np.max(np.abs(np.diag(info)))), 1.0)
    eig = np.linalg.eigvalsh(info)
    if eig.min() <= _RANK_RTOL * scale:
        raise UnidentifiableError(f"{what} information matrix is singular (min eigenvalue {eig.min():.3g})")
    factor = linalg.cho_factor(info)
    theta = linalg.cho_solve(factor, score)
    cov = symmetrize(linalg.cho_solve(factor, np.eye(d)))
    return np.asarray(theta), cov


def param_ls(sys: BatchSystem, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """θ̂ = (ΦᵀΣ_η⁻¹Φ)⁻¹ΦᵀΣ_η⁻¹(Ȳ − c) and its covariance (ΦᵀΣ_η⁻¹Φ)⁻¹.

    Raises:
        UnidentifiableError: Φ(X) does not have full column rank.
    """
    d = sys.model.d
    if d == 0:
        return np.zeros(0), np.zeros((0, 0))
    Phi, _ = regressor_phi(sys, X)
    if np.linalg.matrix_rank(Phi) < d:
        raise UnidentifiableError(f"regressor Phi(X) is rank deficient (rank < d={d})")
    info, score = normal_terms(sys, X)
    return _solve_information(info, score, "least-squares")


def em_step(
    sys: BatchSystem,
    X: np.ndarray,
    covs: np.ndarray,
    lag1: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact M-step: maximize E[log P(Y, X | θ)] under the smoothed state posterior.

    The expectation of ‖Ȳ − Ψ(θ)X‖²_{Σ_η⁻¹} adds tr(ΨᵢᵀΣ_η⁻¹Ψⱼ Σ_X) to the
    information matrix and subtracts tr(ΨᵢᵀΣ_η⁻¹Ψ_base Σ_X) from the score.
    ``covs`` are the marginal covariances Σ_X[k, k], ``lag1`` the blocks
    Σ_X[k, k+1]. Zero covariances reduce the step to ``param_ls``.

    Returns:
        The maximizer and the inverse of the expected information.
    """
    d = sys.model.d
    if d == 0:
        return np.zeros(0), np.zeros((0, 0))
    info, score = normal_terms(sys, X)
    for i, Psi_i in enumerate(sys.psi_basis):
        score[i] -= trace_product(sys, Psi_i, sys.psi_base, covs, lag1)
        for j in range(i, d):
            t = trace_product(sys, Psi_i, sys.psi_basis[j], covs, lag1)
            info[i, j] += t
            if j != i:
                info[j, i] += t
    return _solve_information(info, score, "expected")


def prior_precision(theta_prior: GaussianDensity) -> np.ndarray:
    """Σ_θ⁻¹; a singular Σ_θ is a configuration error."""
    if theta_prior.dim == 0:
        return np.zeros((0, 0))
    try:
        factor = linalg.cho_factor(np.asarray(theta_prior.cov))
    except linalg.LinAlgError as exc:
        raise ConfigurationError("parameter prior covariance must be positive definite") from exc
    return symmetrize(linalg.cho_solve(factor, np.eye(theta_prior.dim)))


def peiv_step(
    sys: BatchSystem,
    X: np.ndarray,
    theta_prior: GaussianDensity,
    precision: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """θ̂ = N⁻¹(Σ_θ⁻¹θ̂¹ + ΦᵀΣ_η⁻¹(Ȳ − c)) with N = Σ_θ⁻¹ + ΦᵀΣ_η⁻¹Φ.

    Returns θ̂ and N⁻¹.
    """
    if sys.model.d == 0:
        return np.zeros(0), np.zeros((0, 0))
    if precision is None:
        precision = prior_precision(theta_prior)
    info, score = normal_terms(sys, X)
    N_mat = symmetrize(precision + info)
    rhs = precision @ theta_prior.mean + score
    return _solve_information(N_mat, rhs, "regularized")


def jmap_cost(sys: BatchSystem, theta: np.ndarray, X: np.ndarray) -> float:
    """‖Ȳ − Ψ(θ)X‖²_{Σ_η⁻¹}."""
    return weighted_norm(sys, sys.Ybar - apply_psi(sys, theta, X))


def peiv_cost(
    sys: BatchSystem,
    theta: np.ndarray,
    X: np.ndarray,
    theta_prior: GaussianDensity,
    precision: np.ndarray | None = None,
) -> float:
    """J(θ, X) = ‖θ − θ̂¹‖²_{Σ_θ⁻¹} + ‖Ȳ − Ψ(θ)X‖²_{Σ_η⁻¹}."""
    if precision is None:
        precision = prior_precision(theta_prior)
    delta = np.asarray(theta, dtype=float) - theta_prior.mean
    return float(delta @ precision @ delta) + jmap_cost(sys, theta, X)
