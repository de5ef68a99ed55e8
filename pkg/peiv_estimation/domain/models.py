from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from peiv_estimation.core.errors import ConfigurationError, ContractViolationError, ModelError

_SYM_TOL = 1e-10
_PSD_TOL = 1e-12


class EstimatorName(str, Enum):
    """Joint estimators known to the benchmark and the CLI."""

    PEIV = "peiv"
    JMAP_ML = "jmapml"
    EM = "em"
    ASEKS = "aseks"


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def as_matrix(value: Any, rows: int, cols: int, name: str) -> np.ndarray:
    """Coerce scalars and nested lists to a float matrix of the given shape.

    A scalar is accepted as ``value * I`` when the target is square.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if rows != cols:
            raise ContractViolationError(f"{name}: scalar given for non-square {rows}x{cols} matrix")
        arr = float(arr) * np.eye(rows)
    elif arr.ndim == 1 and rows * cols == arr.size and (rows == 1 or cols == 1):
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ContractViolationError(f"{name}: expected shape {(rows, cols)}, got {arr.shape}")
    return arr


def as_vector(value: Any, length: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)
    if arr.shape != (length,):
        raise ContractViolationError(f"{name}: expected length {length}, got {arr.shape[0]}")
    return arr


def is_symmetric_psd(mat: np.ndarray) -> bool:
    if mat.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(mat))))
    if not np.allclose(mat, mat.T, rtol=0.0, atol=_SYM_TOL * scale):
        return False
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return bool(eig.min() >= -_PSD_TOL * scale)


def is_positive_definite(mat: np.ndarray) -> bool:
    if mat.size == 0:
        return True
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True, slots=True)
class ParamAffineModel:
    """x_{k+1} = F(θ)x_k + v_k, y_k = H(θ)x_k + e_k with F, H affine in θ.

    ``F_basis[0]`` / ``H_basis[0]`` are the θ-independent parts F_0, H_0;
    ``F_basis[i]`` / ``H_basis[i]`` multiply θ_i for i = 1..d.
    """

    n: int
    m: int
    d: int
    F_basis: tuple[np.ndarray, ...]
    H_basis: tuple[np.ndarray, ...]
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ModelError(f"state and measurement dimensions must be positive, got n={self.n}, m={self.m}")
        if self.d < 0:
            raise ModelError(f"parameter dimension must be >= 0, got {self.d}")
        if len(self.F_basis) != self.d + 1 or len(self.H_basis) != self.d + 1:
            raise ModelError(
                f"expected {self.d + 1} basis matrices, got F={len(self.F_basis)}, H={len(self.H_basis)}"
            )
        try:
            F_basis = tuple(_readonly(as_matrix(F, self.n, self.n, f"F_{i}")) for i, F in enumerate(self.F_basis))
            H_basis = tuple(_readonly(as_matrix(H, self.m, self.n, f"H_{i}")) for i, H in enumerate(self.H_basis))
            Q = as_matrix(self.Q, self.n, self.n, "Q")
            R = as_matrix(self.R, self.m, self.m, "R")
        except ContractViolationError as exc:
            raise ModelError(str(exc)) from exc
        if not is_symmetric_psd(Q):
            raise ModelError("Q must be symmetric positive semidefinite")
        if not is_symmetric_psd(R):
            raise ModelError("R must be symmetric positive semidefinite")
        object.__setattr__(self, "F_basis", F_basis)
        object.__setattr__(self, "H_basis", H_basis)
        object.__setattr__(self, "Q", _readonly(Q))
        object.__setattr__(self, "R", _readonly(R))

    @property
    def degenerate_noise(self) -> bool:
        """True when Q or R is singular and smoothing will need jitter."""
        return not (is_positive_definite(self.Q) and is_positive_definite(self.R))


@dataclass(frozen=True, slots=True)
class GaussianDensity:
    """Mean and covariance of a Gaussian prior."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).reshape(-1)
        cov = as_matrix(self.cov, mean.size, mean.size, "cov")
        if not is_symmetric_psd(cov):
            raise ConfigurationError("covariance must be symmetric positive semidefinite")
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov", _readonly(cov))

    @classmethod
    def scalar(cls, mean: float, var: float) -> "GaussianDensity":
        return cls(mean=np.array([mean]), cov=np.array([[var]]))

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def is_positive_definite(self) -> bool:
        return is_positive_definite(self.cov)


@dataclass(frozen=True, slots=True)
class Trajectory:
    """Simulated states x_0..x_N (columns) and measurements y_1..y_N (columns)."""

    states: np.ndarray
    measurements: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        measurements = np.asarray(self.measurements, dtype=float)
        if measurements.ndim == 1:
            measurements = measurements.reshape(1, -1)
        if states.shape[1] != measurements.shape[1] + 1:
            raise ContractViolationError(
                f"states must have one more column than measurements, got {states.shape[1]} and {measurements.shape[1]}"
            )
        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "measurements", _readonly(measurements))

    @property
    def N(self) -> int:
        return int(self.measurements.shape[1])

    def window(self, start: int) -> "Trajectory":
        """Re-index so that x_start becomes x_0 and y_{start+1} becomes y_1."""
        if not 0 <= start < self.N:
            raise ContractViolationError(f"window start {start} outside 0..{self.N - 1}")
        return Trajectory(states=self.states[:, start:], measurements=self.measurements[:, start:], seed=self.seed)


@dataclass(frozen=True, slots=True)
class SmoothResult:
    """Smoothed posterior of the states given all measurements."""

    means: np.ndarray
    covs: np.ndarray
    lag1: np.ndarray
    loglik: float
    jittered: bool = False
    filtered_means: np.ndarray | None = None
    filtered_covs: np.ndarray | None = None
    predicted_covs: np.ndarray | None = None
    gains: np.ndarray | None = None

    @property
    def N(self) -> int:
        return int(self.means.shape[1]) - 1

    @property
    def stacked_means(self) -> np.ndarray:
        return np.asarray(self.means.T.reshape(-1))


@dataclass(frozen=True, slots=True)
class IterConfig:
    """Iteration control shared by the iterative estimators."""

    max_iter: int = 100
    tol: float = 1e-8
    theta_init: np.ndarray | None = None
    aseks_param_noise: float = 0.0

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.aseks_param_noise < 0:
            raise ConfigurationError(f"aseks_param_noise must be >= 0, got {self.aseks_param_noise}")
        if self.theta_init is not None:
            object.__setattr__(self, "theta_init", _readonly(np.atleast_1d(np.asarray(self.theta_init, dtype=float))))


@dataclass(frozen=True, slots=True)
class JointEstimate:
    """Result of a joint state and parameter estimator."""

    method: str
    theta_hat: np.ndarray
    theta_cov: np.ndarray
    Xhat: np.ndarray
    state_covs: np.ndarray
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = ()
    loglik: float = float("nan")
    theta_initial_time: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.state_covs.shape[1])

    @property
    def means(self) -> np.ndarray:
        """States as an n×(N+1) matrix."""
        return np.asarray(self.Xhat.reshape(-1, self.n).T)

    @property
    def x0_hat(self) -> np.ndarray:
        return np.asarray(self.Xhat[: self.n])


@dataclass(frozen=True, slots=True)
class McConfig:
    """Monte Carlo benchmark configuration."""

    model: ParamAffineModel
    theta_true: np.ndarray
    sigma_theta: np.ndarray
    batch_sizes: tuple[int, ...] = (10, 15, 20, 25, 30, 35, 40, 45, 50, 100, 150, 200)
    M: int = 1000
    seed: int = 0
    methods: tuple[EstimatorName, ...] = tuple(EstimatorName)
    max_iter: int = 100
    tol: float = 1e-8
    aseks_param_noise: float = 0.0
    ellipse_batch_size: int | None = 30
    confidence: float = 0.95
    reuse_first_measurement: bool = True
    prior_scale: float = 2.0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ConfigurationError(f"M must be >= 2, got {self.M}")
        if not self.batch_sizes or min(self.batch_sizes) < 2:
            raise ConfigurationError("batch sizes must be non-empty and >= 2")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigurationError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.prior_scale <= 0:
            raise ConfigurationError(f"prior_scale must be positive, got {self.prior_scale}")
        d = self.model.d
        theta = as_vector(self.theta_true, d, "theta_true")
        sigma = as_matrix(self.sigma_theta, d, d, "sigma_theta")
        if d and not is_positive_definite(sigma):
            raise ConfigurationError("sigma_theta must be positive definite")
        object.__setattr__(self, "theta_true", _readonly(theta))
        object.__setattr__(self, "sigma_theta", _readonly(sigma))
        object.__setattr__(self, "methods", tuple(EstimatorName(m) for m in self.methods))
        object.__setattr__(self, "batch_sizes", tuple(int(b) for b in self.batch_sizes))


@dataclass(frozen=True, slots=True)
class EllipseSummary:
    """Confidence ellipse {z : (z-c)ᵀ cov⁻¹ (z-c) <= radius_scale}."""

    center: np.ndarray
    cov: np.ndarray
    radius_scale: float
    confidence: float
    degenerate: bool = False

    @property
    def area(self) -> float:
        return float(np.pi * self.radius_scale * np.sqrt(max(np.linalg.det(self.cov), 0.0)))

    @property
    def semi_axes(self) -> np.ndarray:
        eig = np.clip(np.linalg.eigvalsh(self.cov), 0.0, None)
        return np.asarray(np.sqrt(self.radius_scale * eig[::-1]))

    @property
    def angle(self) -> float:
        """Orientation of the major axis in radians."""
        _, vecs = np.linalg.eigh(self.cov)
        major = vecs[:, -1]
        return float(np.arctan2(major[1], major[0]))


@dataclass(frozen=True, slots=True)
class MethodSummary:
    """Aggregated errors of one method at one batch size."""

    method: EstimatorName
    N: int
    m_effective: int
    failures: int
    rmse_theta: float
    rmse_x0: float
    q05: np.ndarray
    q95: np.ndarray
    bias_theta: np.ndarray
    var_theta: np.ndarray
    mean_theta_cov: np.ndarray


@dataclass(frozen=True, slots=True)
class McReport:
    config: McConfig
    summaries: tuple[MethodSummary, ...]
    ellipses: dict[EstimatorName, EllipseSummary] = field(default_factory=dict)

    def summary(self, method: EstimatorName | str, N: int) -> MethodSummary:
        key = EstimatorName(method)
        for row in self.summaries:
            if row.method == key and row.N == N:
                return row
        raise KeyError(f"No summary for method={key.value}, N={N}")
