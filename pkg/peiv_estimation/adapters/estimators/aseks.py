import numpy as np
from scipy import linalg

from peiv_estimation.adapters.estimators.common import from_smoother, initial_theta, require_theta_prior
from peiv_estimation.core.errors import DivergenceError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import (
    EstimatorName,
    GaussianDensity,
    IterConfig,
    JointEstimate,
    ParamAffineModel,
    SmoothResult,
)
from peiv_estimation.services.batch import as_measurements
from peiv_estimation.services.linalg import regularize, symmetrize
from peiv_estimation.services.simulation import eval_f, eval_h
from peiv_estimation.services.smoother import loglik, smooth_rts

logger = get_logger("adapters.aseks")

_LOG_2PI = float(np.log(2.0 * np.pi))


def augmented_transition(model: ParamAffineModel, z: np.ndarray) -> np.ndarray:
    """f([x; θ]) = [F(θ)x; θ]."""
    n = model.n
    x, theta = z[:n], z[n:]
    return np.concatenate([eval_f(model, theta) @ x, theta])


def augmented_jacobian(model: ParamAffineModel, z: np.ndarray) -> np.ndarray:
    """∂f/∂z = [[F(θ), F_1x … F_dx], [0, I]]."""
    n, d = model.n, model.d
    x, theta = z[:n], z[n:]
    J = np.zeros((n + d, n + d))
    J[:n, :n] = eval_f(model, theta)
    for i in range(d):
        J[:n, n + i] = model.F_basis[i + 1] @ x
    J[n:, n:] = np.eye(d)
    return J


def measurement_jacobian(model: ParamAffineModel, z: np.ndarray) -> np.ndarray:
    """∂(H(θ)x)/∂z = [H(θ), H_1x … H_dx]."""
    n, d = model.n, model.d
    x, theta = z[:n], z[n:]
    J = np.zeros((model.m, n + d))
    J[:, :n] = eval_h(model, theta)
    for i in range(d):
        J[:, n + i] = model.H_basis[i + 1] @ x
    return J


def _cho(mat: np.ndarray, what: str, k: int) -> tuple[np.ndarray, bool]:
    try:
        return linalg.cho_factor(mat)
    except linalg.LinAlgError as exc:
        raise DivergenceError(f"{what} lost positive definiteness at k={k}") from exc


class AseksEstimator:
    """Augmented state extended Kalman smoother.

    θ is appended to the state with random-walk noise εθ·I (zero by default)
    and the augmented model, bilinear in (x, θ), is linearized around the
    current filtered estimate. One forward EKF pass and one extended RTS
    backward pass; no relinearization loop.
    """

    name = EstimatorName.ASEKS

    def estimate(
        self,
        model: ParamAffineModel,
        Y: np.ndarray,
        prior: GaussianDensity,
        theta_prior: GaussianDensity | None,
        cfg: IterConfig,
    ) -> JointEstimate:
        Y = as_measurements(Y, model.m)
        if model.d == 0:
            smoothed = smooth_rts(model, np.zeros(0), Y, prior)
            return from_smoother(
                self.name, np.zeros(0), np.zeros((0, 0)), smoothed, iterations=1, converged=True, trace=[smoothed.loglik]
            )

        theta_prior = require_theta_prior(model, theta_prior, "ASEKS")
        n, d, m = model.n, model.d, model.m
        p = n + d
        N = Y.shape[1]

        Q, _ = regularize(np.asarray(model.Q), "Q")
        R, _ = regularize(np.asarray(model.R), "R")
        P0, _ = regularize(np.asarray(prior.cov), "P0")
        Qa = linalg.block_diag(Q, cfg.aseks_param_noise * np.eye(d))

        zf = np.empty((N + 1, p))
        Pf = np.empty((N + 1, p, p))
        zp = np.empty((N + 1, p))
        Pp = np.empty((N + 1, p, p))
        jac = np.empty((N, p, p))
        zf[0] = np.concatenate([prior.mean, initial_theta(model, cfg, theta_prior)])
        Pf[0] = linalg.block_diag(P0, np.asarray(theta_prior.cov))
        zp[0], Pp[0] = zf[0], Pf[0]
        eye = np.eye(p)
        filter_loglik = 0.0

        for k in range(1, N + 1):
            jac[k - 1] = augmented_jacobian(model, zf[k - 1])
            zp[k] = augmented_transition(model, zf[k - 1])
            Pp[k] = symmetrize(jac[k - 1] @ Pf[k - 1] @ jac[k - 1].T + Qa)

            Hz = measurement_jacobian(model, zp[k])
            innovation = Y[:, k - 1] - eval_h(model, zp[k][n:]) @ zp[k][:n]
            S = symmetrize(Hz @ Pp[k] @ Hz.T + R)
            S_factor = _cho(S, "innovation covariance", k)
            K = linalg.cho_solve(S_factor, Hz @ Pp[k]).T
            IKH = eye - K @ Hz
            zf[k] = zp[k] + K @ innovation
            Pf[k] = symmetrize(IKH @ Pp[k] @ IKH.T + K @ R @ K.T)

            logdet = 2.0 * float(np.sum(np.log(np.diag(S_factor[0]))))
            filter_loglik -= 0.5 * (m * _LOG_2PI + logdet + float(innovation @ linalg.cho_solve(S_factor, innovation)))
            if not (np.all(np.isfinite(zf[k])) and np.all(np.isfinite(Pf[k]))):
                raise DivergenceError(f"augmented filter produced non-finite values at k={k}")

        zs = zf.copy()
        Ps = Pf.copy()
        lag1 = np.empty((N, n, n))
        for k in range(N - 1, -1, -1):
            P_factor = _cho(Pp[k + 1], "predicted covariance", k + 1)
            G = linalg.cho_solve(P_factor, jac[k] @ Pf[k]).T
            zs[k] = zf[k] + G @ (zs[k + 1] - zp[k + 1])
            Ps[k] = symmetrize(Pf[k] + G @ (Ps[k + 1] - Pp[k + 1]) @ G.T)
            lag1[k] = (G @ Ps[k + 1])[:n, :n]

        if not (np.all(np.isfinite(zs)) and np.all(np.isfinite(Ps))):
            raise DivergenceError("augmented smoother produced non-finite values")

        theta_hat = zs[N, n:].copy()
        logger.debug("ASEKS: theta(N)=%s theta(0)=%s", theta_hat, zs[0, n:])
        smoothed = SmoothResult(
            means=zs[:, :n].T.copy(),
            covs=Ps[:, :n, :n].copy(),
            lag1=lag1,
            loglik=loglik(model, theta_hat, Y, prior),
        )
        return from_smoother(
            self.name,
            theta_hat,
            symmetrize(Ps[N, n:, n:]),
            smoothed,
            iterations=1,
            converged=True,
            trace=[filter_loglik],
            theta_initial_time=zs[0, n:].copy(),
        )
