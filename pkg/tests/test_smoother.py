import numpy as np
import pytest
from scipy import stats

from peiv_estimation.core.errors import IllPosedError
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel
from peiv_estimation.services.batch import assemble, psi_dense, sigma_eta_inv_dense
from peiv_estimation.services.linalg import BlockTridiagonalCholesky
from peiv_estimation.services.simulation import eval_f, eval_h, scalar_benchmark_model, simulate
from peiv_estimation.services.smoother import kalman_filter, loglik, smooth_batch, smooth_rts
from tests.conftest import random_instance, random_model


def _grid(count: int, max_n: int, max_d: int, max_N: int) -> list[tuple[int, int, int, int, int]]:
    rng = np.random.default_rng(1234)
    return [
        (
            seed,
            int(rng.integers(1, max_n + 1)),
            int(rng.integers(1, 3)),
            int(rng.integers(0, max_d + 1)),
            int(rng.integers(1, max_N + 1)),
        )
        for seed in range(count)
    ]


@pytest.mark.parametrize("seed,n,m,d,N", _grid(50, 3, 2, 40))
def test_batch_and_rts_means_agree(seed, n, m, d, N):
    inst = random_instance(seed, n, m, d, N)
    sys = assemble(inst.model, inst.Y, inst.prior)
    X_batch, _ = smooth_batch(sys, inst.theta)
    X_rts = smooth_rts(inst.model, inst.theta, inst.Y, inst.prior).stacked_means
    assert np.max(np.abs(X_batch - X_rts)) <= 1e-8 * (1 + np.max(np.abs(X_batch)))


@pytest.mark.parametrize("seed,n,m,d,N", _grid(15, 3, 2, 10))
def test_rts_covariances_are_dense_inverse_blocks(seed, n, m, d, N):
    inst = random_instance(seed, n, m, d, N)
    sys = assemble(inst.model, inst.Y, inst.prior)
    X_dense, cov = smooth_batch(sys, inst.theta, dense=True)
    Sigma = cov.to_dense()
    sm = smooth_rts(inst.model, inst.theta, inst.Y, inst.prior)

    np.testing.assert_allclose(sm.stacked_means, X_dense, atol=1e-8 * (1 + np.max(np.abs(X_dense))))
    for k in range(N + 1):
        np.testing.assert_allclose(sm.covs[k], Sigma[k * n : (k + 1) * n, k * n : (k + 1) * n], atol=1e-8)
    for k in range(N):
        np.testing.assert_allclose(sm.lag1[k], Sigma[k * n : (k + 1) * n, (k + 1) * n : (k + 2) * n], atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_selected_inverse_matches_dense(seed):
    inst = random_instance(seed, 2, 2, 1, 8)
    sys = assemble(inst.model, inst.Y, inst.prior)
    X_sparse, sparse = smooth_batch(sys, inst.theta)
    X_dense, dense = smooth_batch(sys, inst.theta, dense=True)
    np.testing.assert_allclose(X_sparse, X_dense, atol=1e-10)
    np.testing.assert_allclose(sparse.diag, dense.diag, atol=1e-10)
    np.testing.assert_allclose(sparse.upper, dense.upper, atol=1e-10)
    np.testing.assert_allclose(sparse.to_dense(), dense.to_dense(), atol=1e-10)


def test_covariances_do_not_depend_on_measurements():
    inst = random_instance(7, 2, 1, 1, 12)
    other_Y = np.random.default_rng(99).standard_normal(inst.Y.shape) * 10
    a = smooth_rts(inst.model, inst.theta, inst.Y, inst.prior)
    b = smooth_rts(inst.model, inst.theta, other_Y, inst.prior)
    np.testing.assert_allclose(a.covs, b.covs, atol=1e-12)
    np.testing.assert_allclose(a.lag1, b.lag1, atol=1e-12)
    assert not np.allclose(a.means, b.means)


def test_no_measurements_returns_prior(scalar_model):
    prior = GaussianDensity.scalar(0.4, 1.5)
    sys = assemble(scalar_model, np.zeros((1, 0)), prior)
    X, cov = smooth_batch(sys, [0.9])
    np.testing.assert_allclose(X, [0.4])
    np.testing.assert_allclose(cov.diag[0], [[1.5]])
    assert cov.upper.shape == (0, 1, 1)


def _dense_loglik(inst) -> float:
    """log N(Y; C μ_X, C Σ_X Cᵀ + R⊗I) with the state prior implied by the dynamics."""
    model, theta, Y, prior = inst.model, inst.theta, inst.Y, inst.prior
    n, m, N = model.n, model.m, Y.shape[1]
    sys = assemble(model, Y, prior)
    Psi = psi_dense(sys, theta)
    W = sigma_eta_inv_dense(sys)
    C, rest = Psi[: m * N], Psi[m * N :]
    W_rest = W[m * N :, m * N :]
    prior_cov = np.linalg.inv(rest.T @ W_rest @ rest)

    F = eval_f(model, theta)
    mean = [prior.mean]
    for _ in range(N):
        mean.append(F @ mean[-1])
    mu = np.concatenate(mean)

    R_big = np.kron(np.eye(N), model.R)
    return float(stats.multivariate_normal(C @ mu, C @ prior_cov @ C.T + R_big).logpdf(Y.T.reshape(-1)))


@pytest.mark.parametrize("seed,n,m,N", [(0, 1, 1, 2), (1, 2, 1, 5), (2, 2, 2, 4), (3, 3, 2, 6)])
def test_loglik_matches_dense_marginal(seed, n, m, N):
    inst = random_instance(seed, n, m, 1, N)
    assert loglik(inst.model, inst.theta, inst.Y, inst.prior) == pytest.approx(_dense_loglik(inst), rel=1e-9)


def test_impossible_measurement_lowers_loglik(scalar_data):
    inst = scalar_data
    base = loglik(inst.model, inst.theta, inst.Y, inst.prior)
    fp = kalman_filter(inst.model, inst.theta, inst.Y, inst.prior)
    predicted = 0.9 * fp.filtered_means[-1, 0]
    outlier = np.append(inst.Y, [[predicted + 100 * np.sqrt(0.09)]], axis=1)
    assert loglik(inst.model, inst.theta, outlier, inst.prior) < base


def test_loglik_continuous_in_theta(scalar_data):
    inst = scalar_data
    a = loglik(inst.model, [0.9], inst.Y, inst.prior)
    b = loglik(inst.model, [0.9 + 1e-9], inst.Y, inst.prior)
    assert abs(a - b) < 1e-5


def test_block_cholesky_rejects_indefinite():
    diag = np.stack([np.eye(2), -np.eye(2)])
    lower = np.zeros((1, 2, 2))
    with pytest.raises(IllPosedError):
        BlockTridiagonalCholesky.factor(diag, lower)


def test_degenerate_noise_sets_jitter_flag():
    model = scalar_benchmark_model(q=0.0, r=0.09)
    sm = smooth_rts(model, [0.9], np.ones((1, 5)), GaussianDensity.scalar(0.0, 1.0))
    assert sm.jittered
    assert np.all(np.isfinite(sm.means))


@pytest.mark.parametrize("seed", range(3))
def test_exact_measurements_pin_states(seed):
    rng = np.random.default_rng(seed)
    base = random_model(rng, 2, 2, 1)
    H_basis = (np.eye(2), 0.5 * rng.standard_normal((2, 2)))
    model = ParamAffineModel(n=2, m=2, d=1, F_basis=base.F_basis, H_basis=H_basis, Q=base.Q, R=1e-12 * np.eye(2))
    theta = np.array([0.3])
    Y = rng.standard_normal((2, 6))
    sys = assemble(model, Y, GaussianDensity(mean=np.zeros(2), cov=np.eye(2)))
    X, _ = smooth_batch(sys, theta)
    H = eval_h(model, theta)
    expected = np.linalg.solve(H, Y).T.reshape(-1)
    np.testing.assert_allclose(X[2:], expected, atol=1e-8)


def test_rts_reproduces_noise_free_trajectory():
    model = scalar_benchmark_model(q=0.0, r=0.0)
    traj = simulate(model, [0.9], GaussianDensity.scalar(1.0, 0.0), 20, seed=3)
    sm = smooth_rts(model, [0.9], traj.measurements, GaussianDensity.scalar(1.0, 1.0))
    assert sm.jittered
    np.testing.assert_allclose(sm.means, traj.states, atol=1e-9)


def test_single_step_loglik_closed_form(scalar_model):
    prior = GaussianDensity.scalar(0.4, 1.5)
    y = 0.7
    # y_1 ~ N(θ m0, θ² P0 + Q + R)
    expected = stats.norm(0.9 * 0.4, np.sqrt(0.81 * 1.5 + 0.2 + 0.09)).logpdf(y)
    assert loglik(scalar_model, [0.9], np.array([[y]]), prior) == pytest.approx(expected, rel=1e-12)
