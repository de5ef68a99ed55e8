"""Block regression form Ȳ = Ψ(θ)X + η and its affine split Ψ(θ) = Ψ_base + Σ θ_i Ψ_i.

Ψ(θ) stacks C(θ) (measurement rows), A(θ) (process rows) and [I, 0, …, 0]
(prior row). Neither D(X) = Xᵀ⊗I nor vec(Ψ) is ever formed: Φ(X) = D(X)B is
computed column by column as Ψ_i X.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import block_diag

from peiv_estimation.core.errors import ContractViolationError
from peiv_estimation.core.logger import get_logger
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel
from peiv_estimation.services.linalg import regularize, spd_inverse
from peiv_estimation.services.simulation import check_theta, eval_f, eval_h

logger = get_logger("services.batch")

RowGroup = Literal["measurement", "process", "prior"]


@dataclass(frozen=True, slots=True)
class BlockBand:
    """Dense blocks of equal shape living in one row group.

    Block j sits at block-row ``rows[j]`` of the group and block-column
    ``cols[j]`` (the state index).
    """

    group: RowGroup
    offset: int
    block_rows: int
    rows: np.ndarray
    cols: np.ndarray
    blocks: np.ndarray

    def segment(self, v: np.ndarray) -> np.ndarray:
        stop = self.offset + (int(self.rows.max()) + 1) * self.block_rows
        return v[self.offset : stop].reshape(-1, self.block_rows)


@dataclass(frozen=True, slots=True)
class BlockMatrix:
    """Block-coordinate sparse matrix of shape (L, n(N+1))."""

    shape: tuple[int, int]
    n: int
    bands: tuple[BlockBand, ...]

    def matvec(self, X: np.ndarray) -> np.ndarray:
        Xb = X.reshape(-1, self.n)
        out = np.zeros(self.shape[0])
        for band in self.bands:
            contrib = np.einsum("kij,kj->ki", band.blocks, Xb[band.cols])
            np.add.at(band.segment(out), band.rows, contrib)
        return out

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        for band in self.bands:
            for r, c, block in zip(band.rows, band.cols, band.blocks):
                r0 = band.offset + int(r) * band.block_rows
                c0 = int(c) * self.n
                dense[r0 : r0 + band.block_rows, c0 : c0 + self.n] += block
        return dense

    def scaled(self, alpha: float) -> "BlockMatrix":
        bands = tuple(
            BlockBand(b.group, b.offset, b.block_rows, b.rows, b.cols, alpha * b.blocks) for b in self.bands
        )
        return BlockMatrix(self.shape, self.n, bands)

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        if self.shape != other.shape:
            raise ContractViolationError(f"cannot add block matrices of shape {self.shape} and {other.shape}")
        return BlockMatrix(self.shape, self.n, self.bands + other.bands)


@dataclass(frozen=True, slots=True)
class BatchSystem:
    """Augmented regression Ȳ = Ψ(θ)X + η for one data batch."""

    model: ParamAffineModel
    Y: np.ndarray
    prior: GaussianDensity
    Ybar: np.ndarray
    weights: dict[RowGroup, np.ndarray]
    psi_base: BlockMatrix
    psi_basis: tuple[BlockMatrix, ...]
    jittered: bool = False

    @property
    def N(self) -> int:
        return int(self.Y.shape[1])

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.model.n, self.model.m, self.model.d

    @property
    def L(self) -> int:
        return int(self.Ybar.size)

    @property
    def state_len(self) -> int:
        return self.model.n * (self.N + 1)

    @property
    def sigma_eta_inv_blocks(self) -> list[np.ndarray]:
        """Diagonal blocks of Σ_η⁻¹ in row order: R⁻¹ ×N, Q⁻¹ ×N, P_0⁻¹."""
        return [self.weights["measurement"]] * self.N + [self.weights["process"]] * self.N + [self.weights["prior"]]


def _tile(block: np.ndarray, count: int) -> np.ndarray:
    return np.repeat(block[np.newaxis, :, :], count, axis=0)


def _psi_slice(n: int, m: int, N: int, F: np.ndarray, H: np.ndarray, base: bool) -> BlockMatrix:
    L = m * N + n * N + n
    steps = np.arange(N)
    bands = [
        BlockBand("measurement", 0, m, steps, steps + 1, _tile(H, N)),
        BlockBand("process", m * N, n, steps, steps, _tile(F, N)),
    ]
    if base:
        bands.append(BlockBand("process", m * N, n, steps, steps + 1, _tile(-np.eye(n), N)))
    if N == 0:
        bands = []
    if base:
        bands.append(BlockBand("prior", m * N + n * N, n, np.array([0]), np.array([0]), np.eye(n)[np.newaxis]))
    return BlockMatrix((L, n * (N + 1)), n, tuple(bands))


def as_measurements(Y: np.ndarray, m: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1) if m == 1 else Y.reshape(m, -1)
    if Y.ndim != 2 or Y.shape[0] != m:
        raise ContractViolationError(f"measurements must be an m×N array with m={m}, got shape {Y.shape}")
    return Y


def assemble(model: ParamAffineModel, Y: np.ndarray, prior: GaussianDensity) -> BatchSystem:
    """Build Ȳ = [Y; 0; m_0], Σ_η⁻¹ and the affine slices of Ψ(θ)."""
    n, m, d = model.n, model.m, model.d
    Y = as_measurements(Y, m)
    if prior.dim != n:
        raise ContractViolationError(f"state prior has dimension {prior.dim}, model state dimension is {n}")
    N = Y.shape[1]

    R, jit_r = regularize(np.asarray(model.R), "R")
    Q, jit_q = regularize(np.asarray(model.Q), "Q")
    P0, jit_p = regularize(np.asarray(prior.cov), "P0")
    weights: dict[RowGroup, np.ndarray] = {
        "measurement": spd_inverse(R),
        "process": spd_inverse(Q),
        "prior": spd_inverse(P0),
    }

    Ybar = np.concatenate([Y.T.reshape(-1), np.zeros(n * N), prior.mean])
    psi_base = _psi_slice(n, m, N, model.F_basis[0], model.H_basis[0], base=True)
    psi_basis = tuple(_psi_slice(n, m, N, model.F_basis[i], model.H_basis[i], base=False) for i in range(1, d + 1))
    logger.debug("Assembled batch system: N=%d, L=%d, d=%d", N, Ybar.size, d)
    return BatchSystem(
        model=model,
        Y=Y,
        prior=prior,
        Ybar=Ybar,
        weights=weights,
        psi_base=psi_base,
        psi_basis=psi_basis,
        jittered=jit_r or jit_q or jit_p,
    )


def _check_state(sys: BatchSystem, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(-1)
    if X.size != sys.state_len:
        raise ContractViolationError(f"state stack must have length {sys.state_len}, got {X.size}")
    return X


def psi(sys: BatchSystem, theta: np.ndarray) -> BlockMatrix:
    """Ψ(θ) as a block matrix."""
    th = check_theta(sys.model, theta)
    out = sys.psi_base
    for t, basis in zip(th, sys.psi_basis):
        out = out + basis.scaled(float(t))
    return out


def psi_dense(sys: BatchSystem, theta: np.ndarray) -> np.ndarray:
    return psi(sys, theta).to_dense()


def apply_psi(sys: BatchSystem, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Ψ(θ)X through the block structure."""
    th = check_theta(sys.model, theta)
    X = _check_state(sys, X)
    out = sys.psi_base.matvec(X)
    for t, basis in zip(th, sys.psi_basis):
        out += t * basis.matvec(X)
    return out


def regressor_phi(sys: BatchSystem, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Φ(X) with columns Ψ_i X and c(X) = Ψ_base X, so that Ψ(θ)X = Φθ + c."""
    X = _check_state(sys, X)
    c = sys.psi_base.matvec(X)
    if not sys.psi_basis:
        return np.zeros((sys.L, 0)), c
    Phi = np.column_stack([basis.matvec(X) for basis in sys.psi_basis])
    return Phi, c


def _group_slices(sys: BatchSystem) -> dict[RowGroup, slice]:
    n, m, _ = sys.dims
    N = sys.N
    return {
        "measurement": slice(0, m * N),
        "process": slice(m * N, m * N + n * N),
        "prior": slice(m * N + n * N, m * N + n * N + n),
    }


def weigh(sys: BatchSystem, v: np.ndarray) -> np.ndarray:
    """Σ_η⁻¹ v (v may carry extra trailing columns)."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for group, sl in _group_slices(sys).items():
        W = sys.weights[group]
        k = W.shape[0]
        seg = v[sl].reshape((-1, k) + v.shape[1:])
        out[sl] = np.einsum("ij,bj...->bi...", W, seg).reshape(v[sl].shape)
    return out


def weighted_norm(sys: BatchSystem, r: np.ndarray) -> float:
    """‖r‖²_{Σ_η⁻¹}."""
    return float(r @ weigh(sys, r))


def sigma_eta_inv_dense(sys: BatchSystem) -> np.ndarray:
    return np.asarray(block_diag(*sys.sigma_eta_inv_blocks))


def normal_blocks(sys: BatchSystem, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blocks of ΨᵀΣ_η⁻¹Ψ and the right-hand side ΨᵀΣ_η⁻¹Ȳ.

    Returns:
        diag: (N+1, n, n) diagonal blocks.
        lower: (N, n, n) blocks at (k+1, k).
        rhs: (N+1, n).
    """
    n, _, _ = sys.dims
    N = sys.N
    F = eval_f(sys.model, theta)
    H = eval_h(sys.model, theta)
    Ri, Qi, P0i = sys.weights["measurement"], sys.weights["process"], sys.weights["prior"]

    HtRH = H.T @ Ri @ H
    FtQF = F.T @ Qi @ F
    diag = np.empty((N + 1, n, n))
    diag[0] = P0i
    diag[1:] = HtRH + Qi
    diag[:-1] += FtQF
    lower = _tile(-Qi @ F, N)

    rhs = np.empty((N + 1, n))
    rhs[0] = P0i @ sys.prior.mean
    rhs[1:] = (H.T @ Ri @ sys.Y).T
    return diag, lower, rhs


def trace_product(
    sys: BatchSystem,
    left: BlockMatrix,
    right: BlockMatrix,
    diag: np.ndarray,
    upper: np.ndarray,
) -> float:
    """tr(leftᵀ Σ_η⁻¹ right Σ_X) from the block-tridiagonal part of Σ_X.

    ``diag[k]`` = Σ_X[k, k] and ``upper[k]`` = Σ_X[k, k+1]; blocks of Σ_X
    further off the diagonal are never touched because every row of Ψ_i
    couples at most two neighbouring states.
    """
    total = 0.0
    for a in left.bands:
        for b in right.bands:
            if a.group != b.group:
                continue
            _, ia, ib = np.intersect1d(a.rows, b.rows, return_indices=True)
            if ia.size == 0:
                continue
            c1, c2 = a.cols[ia], b.cols[ib]
            S = np.empty((ia.size, sys.model.n, sys.model.n))
            same, fwd, back = c2 == c1, c2 == c1 + 1, c2 == c1 - 1
            if not np.all(same | fwd | back):
                raise ContractViolationError("trace_product needs blocks at most one state apart")
            S[same] = diag[c1[same]]
            S[fwd] = np.swapaxes(upper[c1[fwd]], -1, -2)
            S[back] = upper[c1[back] - 1]
            W = sys.weights[a.group]
            total += float(np.einsum("kap,ac,kcd,kdp->", a.blocks[ia], W, b.blocks[ib], S))
    return total
