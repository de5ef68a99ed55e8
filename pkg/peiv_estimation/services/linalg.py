"""Symmetric positive definite helpers and the block-tridiagonal Cholesky sweep."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from peiv_estimation.core.errors import IllPosedError
from peiv_estimation.core.logger import get_logger

logger = get_logger("services.linalg")

JITTER = 1e-12


def regularize(cov: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    """Return ``cov`` unchanged if it is positive definite, else ``cov + JITTER·I``."""
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0:
        return cov, False
    try:
        linalg.cho_factor(cov)
        return cov, False
    except linalg.LinAlgError:
        logger.warning("%s is singular, adding %.0e*I jitter", name, JITTER)
        return cov + JITTER * np.eye(cov.shape[0]), True


def spd_inverse(cov: np.ndarray) -> np.ndarray:
    if cov.size == 0:
        return np.zeros_like(cov)
    inv = linalg.cho_solve(linalg.cho_factor(cov), np.eye(cov.shape[0]))
    return np.asarray(0.5 * (inv + inv.T))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return np.asarray(0.5 * (mat + np.swapaxes(mat, -1, -2)))


@dataclass(frozen=True, slots=True)
class BlockTridiagonalCholesky:
    """A = L Lᵀ for a symmetric block-tridiagonal A.

    ``diag[k]`` is the lower-triangular block L_kk and ``sub[k]`` the block
    L_{k+1,k}.
    """

    diag: np.ndarray
    sub: np.ndarray

    @classmethod
    def factor(cls, diag: np.ndarray, lower: np.ndarray) -> "BlockTridiagonalCholesky":
        """Factor A with diagonal blocks ``diag`` and sub-diagonal blocks ``lower`` (A_{k+1,k})."""
        nb, n, _ = diag.shape
        L = np.empty_like(diag)
        C = np.empty_like(lower)
        try:
            L[0] = linalg.cholesky(diag[0], lower=True)
            for k in range(nb - 1):
                # C_k = A_{k+1,k} L_k^{-T}
                C[k] = linalg.solve_triangular(L[k], lower[k].T, lower=True).T
                L[k + 1] = linalg.cholesky(diag[k + 1] - C[k] @ C[k].T, lower=True)
        except linalg.LinAlgError as exc:
            raise IllPosedError("normal matrix is not positive definite") from exc
        return cls(diag=L, sub=C)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs with rhs of shape (blocks, n)."""
        nb = self.diag.shape[0]
        z = np.empty_like(rhs, dtype=float)
        z[0] = linalg.solve_triangular(self.diag[0], rhs[0], lower=True)
        for k in range(1, nb):
            z[k] = linalg.solve_triangular(self.diag[k], rhs[k] - self.sub[k - 1] @ z[k - 1], lower=True)
        x = np.empty_like(z)
        x[-1] = linalg.solve_triangular(self.diag[-1], z[-1], lower=True, trans="T")
        for k in range(nb - 2, -1, -1):
            x[k] = linalg.solve_triangular(self.diag[k], z[k] - self.sub[k].T @ x[k + 1], lower=True, trans="T")
        return x

    def selected_inverse(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal blocks S_kk and super-diagonal blocks S_{k,k+1} of A⁻¹.

        Backward recursion from U S = L⁻¹ with U = Lᵀ:
        S_{k,k+1} = -G_k S_{k+1,k+1},  S_kk = (L_k L_kᵀ)⁻¹ + G_k S_{k+1,k+1} G_kᵀ,
        G_k = L_k^{-T} C_kᵀ.
        """
        nb, n, _ = self.diag.shape
        S = np.empty_like(self.diag)
        S_up = np.empty((nb - 1, n, n))
        eye = np.eye(n)
        Linv = linalg.solve_triangular(self.diag[-1], eye, lower=True)
        S[-1] = Linv.T @ Linv
        for k in range(nb - 2, -1, -1):
            Linv = linalg.solve_triangular(self.diag[k], eye, lower=True)
            G = Linv.T @ self.sub[k].T
            S_up[k] = -G @ S[k + 1]
            S[k] = Linv.T @ Linv + G @ S[k + 1] @ G.T
        return symmetrize(S), S_up
