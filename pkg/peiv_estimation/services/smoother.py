"""MAP state estimation for a fixed θ.

Two equivalent routes: the batch normal equations of the stacked regression
(block Cholesky, used as oracle) and the forward Kalman filter followed by the
Rauch-Tung-Striebel backward pass (used inside the estimators).
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from peiv_estimation.core.errors import IllPosedError, NumericalFailureError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel, SmoothResult
from peiv_estimation.services.batch import BatchSystem, normal_blocks, psi_dense, sigma_eta_inv_dense, as_measurements
from peiv_estimation.services.linalg import BlockTridiagonalCholesky, regularize, symmetrize
from peiv_estimation.services.simulation import eval_f, eval_h

logger = get_logger("services.smoother")

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, slots=True)
class BlockTridiagonalCovariance:
    """Σ_X = (ΨᵀΣ_η⁻¹Ψ)⁻¹ held by its block-tridiagonal part.

    ``diag[k]`` = Σ_X[k, k], ``upper[k]`` = Σ_X[k, k+1]. ``to_dense`` inverts
    the full normal matrix and is meant for small instances only.
    """

    diag: np.ndarray
    upper: np.ndarray
    normal_diag: np.ndarray
    normal_lower: np.ndarray
    dense: np.ndarray | None = None

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        nb, n, _ = self.normal_diag.shape
        A = np.zeros((nb * n, nb * n))
        for k in range(nb):
            A[k * n : (k + 1) * n, k * n : (k + 1) * n] = self.normal_diag[k]
        for k in range(nb - 1):
            A[(k + 1) * n : (k + 2) * n, k * n : (k + 1) * n] = self.normal_lower[k]
            A[k * n : (k + 1) * n, (k + 1) * n : (k + 2) * n] = self.normal_lower[k].T
        return np.asarray(linalg.cho_solve(linalg.cho_factor(A), np.eye(nb * n)))


def smooth_batch(sys: BatchSystem, theta: np.ndarray, *, dense: bool = False) -> tuple[np.ndarray, BlockTridiagonalCovariance]:
    """X̂ = (ΨᵀΣ_η⁻¹Ψ)⁻¹ΨᵀΣ_η⁻¹Ȳ and Σ_X = (ΨᵀΣ_η⁻¹Ψ)⁻¹.

    The block-tridiagonal normal matrix is factored with a block Cholesky sweep;
    ``dense=True`` solves the full dense system instead (oracle path).
    """
    n = sys.model.n
    diag, lower, rhs = normal_blocks(sys, theta)

    if dense:
        Psi = psi_dense(sys, theta)
        W = sigma_eta_inv_dense(sys)
        A = Psi.T @ W @ Psi
        try:
            factor = linalg.cho_factor(A)
        except linalg.LinAlgError as exc:
            raise IllPosedError("normal matrix is not positive definite") from exc
        Xhat = linalg.cho_solve(factor, Psi.T @ W @ sys.Ybar)
        Sigma = linalg.cho_solve(factor, np.eye(A.shape[0]))
        nb = sys.N + 1
        S_diag = np.stack([Sigma[k * n : (k + 1) * n, k * n : (k + 1) * n] for k in range(nb)])
        S_up = np.stack([Sigma[k * n : (k + 1) * n, (k + 1) * n : (k + 2) * n] for k in range(nb - 1)]) if nb > 1 else np.zeros((0, n, n))
        return np.asarray(Xhat), BlockTridiagonalCovariance(S_diag, S_up, diag, lower, dense=Sigma)

    chol = BlockTridiagonalCholesky.factor(diag, lower)
    Xhat = chol.solve(rhs).reshape(-1)
    S_diag, S_up = chol.selected_inverse()
    return Xhat, BlockTridiagonalCovariance(S_diag, S_up, diag, lower)


@dataclass(frozen=True, slots=True)
class FilterPass:
    """Forward Kalman filter output, indexed k = 0..N (index 0 holds the prior)."""

    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    loglik: float
    jittered: bool


def kalman_filter(
    model: ParamAffineModel,
    theta: np.ndarray,
    Y: np.ndarray,
    prior: GaussianDensity,
) -> FilterPass:
    """Kalman filter with Joseph-form covariance update and innovation log-likelihood."""
    return _filter(eval_f(model, theta), eval_h(model, theta), model, as_measurements(Y, model.m), prior)


def _filter(F: np.ndarray, H: np.ndarray, model: ParamAffineModel, Y: np.ndarray, prior: GaussianDensity) -> FilterPass:
    Q, jit_q = regularize(np.asarray(model.Q), "Q")
    R, jit_r = regularize(np.asarray(model.R), "R")
    P0, jit_p = regularize(np.asarray(prior.cov), "P0")

    n, m, N = model.n, model.m, Y.shape[1]
    xp = np.empty((N + 1, n))
    Pp = np.empty((N + 1, n, n))
    xf = np.empty((N + 1, n))
    Pf = np.empty((N + 1, n, n))
    xp[0] = xf[0] = prior.mean
    Pp[0] = Pf[0] = P0
    eye = np.eye(n)
    loglik = 0.0

    for k in range(1, N + 1):
        x = F @ xf[k - 1]
        P = symmetrize(F @ Pf[k - 1] @ F.T + Q)
        xp[k], Pp[k] = x, P

        innovation = Y[:, k - 1] - H @ x
        S = symmetrize(H @ P @ H.T + R)
        try:
            S_factor = linalg.cho_factor(S, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalFailureError(f"innovation covariance not positive definite at k={k}") from exc
        K = linalg.cho_solve(S_factor, H @ P, check_finite=False).T
        IKH = eye - K @ H
        xf[k] = x + K @ innovation
        Pf[k] = symmetrize(IKH @ P @ IKH.T + K @ R @ K.T)

        logdet = 2.0 * float(np.sum(np.log(np.diag(S_factor[0]))))
        loglik -= 0.5 * (m * _LOG_2PI + logdet + float(innovation @ linalg.cho_solve(S_factor, innovation, check_finite=False)))

    if not (np.isfinite(loglik) and np.all(np.isfinite(xf)) and np.all(np.isfinite(Pf))):
        raise NumericalFailureError("Kalman filter produced non-finite values")
    return FilterPass(xp, Pp, xf, Pf, loglik, jit_q or jit_r or jit_p)


def smooth_rts(
    model: ParamAffineModel,
    theta: np.ndarray,
    Y: np.ndarray,
    prior: GaussianDensity,
) -> SmoothResult:
    """Kalman filter plus RTS backward pass.

    Lag-one covariances cov(x_k, x_{k+1} | Y) = G_k P_{k+1|N} come out of the
    backward gain recursion.
    """
    F = eval_f(model, theta)
    fp = _filter(F, eval_h(model, theta), model, as_measurements(Y, model.m), prior)
    N = fp.filtered_means.shape[0] - 1
    n = model.n

    xs = fp.filtered_means.copy()
    Ps = fp.filtered_covs.copy()
    gains = np.empty((N, n, n))
    lag1 = np.empty((N, n, n))
    for k in range(N - 1, -1, -1):
        try:
            P_factor = linalg.cho_factor(fp.predicted_covs[k + 1], check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalFailureError(f"predicted covariance not positive definite at k={k + 1}") from exc
        G = linalg.cho_solve(P_factor, F @ fp.filtered_covs[k], check_finite=False).T
        xs[k] = fp.filtered_means[k] + G @ (xs[k + 1] - fp.predicted_means[k + 1])
        Ps[k] = symmetrize(fp.filtered_covs[k] + G @ (Ps[k + 1] - fp.predicted_covs[k + 1]) @ G.T)
        gains[k] = G
        lag1[k] = G @ Ps[k + 1]

    if fp.jittered:
        logger.debug("Smoother ran with jittered covariances")
    return SmoothResult(
        means=xs.T.copy(),
        covs=Ps,
        lag1=lag1,
        loglik=fp.loglik,
        jittered=fp.jittered,
        filtered_means=fp.filtered_means.T.copy(),
        filtered_covs=fp.filtered_covs,
        predicted_covs=fp.predicted_covs,
        gains=gains,
    )


def loglik(model: ParamAffineModel, theta: np.ndarray, Y: np.ndarray, prior: GaussianDensity) -> float:
    """log P(Y | θ) by the prediction-error decomposition."""
    return kalman_filter(model, theta, Y, prior).loglik
