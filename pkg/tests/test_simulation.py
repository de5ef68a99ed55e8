import numpy as np
import pytest

from peiv_estimation.core.errors import ContractViolationError, ModelError, NonStationaryError
from peiv_estimation.domain.models import GaussianDensity, ParamAffineModel
from peiv_estimation.services.simulation import (
    eval_f,
    eval_h,
    scalar_benchmark_model,
    simulate,
    stack_states,
    stationary_cov,
    unstack_states,
)
from tests.conftest import random_model


def test_eval_scalar_benchmark(scalar_model):
    assert eval_f(scalar_model, [0.9]) == pytest.approx(np.array([[0.9]]))
    assert eval_h(scalar_model, [0.9]) == pytest.approx(np.array([[1.0]]))


def test_eval_at_zero_is_base():
    model = random_model(np.random.default_rng(0), 3, 2, 2)
    np.testing.assert_array_equal(eval_f(model, np.zeros(2)), model.F_basis[0])
    np.testing.assert_array_equal(eval_h(model, np.zeros(2)), model.H_basis[0])


@pytest.mark.parametrize("seed", range(5))
def test_eval_matches_naive_sum(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 2, 2, 2)
    theta = rng.standard_normal(2)
    F = np.zeros((2, 2))
    H = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            F[i, j] = model.F_basis[0][i, j] + sum(theta[p] * model.F_basis[p + 1][i, j] for p in range(2))
            H[i, j] = model.H_basis[0][i, j] + sum(theta[p] * model.H_basis[p + 1][i, j] for p in range(2))
    np.testing.assert_allclose(eval_f(model, theta), F, rtol=0, atol=1e-14)
    np.testing.assert_allclose(eval_h(model, theta), H, rtol=0, atol=1e-14)


def test_eval_is_affine():
    rng = np.random.default_rng(4)
    model = random_model(rng, 3, 2, 2)
    t1, t2 = rng.standard_normal(2), rng.standard_normal(2)
    for a in (-1.5, 0.3, 2.0):
        mixed = a * t1 + (1 - a) * t2
        np.testing.assert_allclose(eval_f(model, mixed), a * eval_f(model, t1) + (1 - a) * eval_f(model, t2), atol=1e-12)
        np.testing.assert_allclose(eval_h(model, mixed), a * eval_h(model, t1) + (1 - a) * eval_h(model, t2), atol=1e-12)


def test_eval_rejects_wrong_theta_length(scalar_model):
    with pytest.raises(ContractViolationError):
        eval_f(scalar_model, [0.9, 0.1])


def test_noise_free_recursion():
    model = scalar_benchmark_model(q=0.0, r=0.0)
    traj = simulate(model, [0.9], GaussianDensity.scalar(1.0, 0.0), 3, seed=0)
    np.testing.assert_allclose(traj.states[0], [1.0, 0.9, 0.81, 0.729], rtol=0, atol=1e-15)
    np.testing.assert_allclose(traj.measurements[0], [0.9, 0.81, 0.729], rtol=0, atol=1e-15)


def test_same_seed_same_trajectory(scalar_model):
    x0 = GaussianDensity.scalar(0.0, 1.0)
    a = simulate(scalar_model, [0.9], x0, 50, seed=123)
    b = simulate(scalar_model, [0.9], x0, 50, seed=123)
    c = simulate(scalar_model, [0.9], x0, 50, seed=124)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.measurements, b.measurements)
    assert not np.array_equal(a.states, c.states)


def test_empirical_stationary_variance(scalar_model):
    P = 0.2 / (1 - 0.81)
    traj = simulate(scalar_model, [0.9], GaussianDensity.scalar(0.0, P), 100_000, seed=2024)
    assert np.var(traj.states[0]) == pytest.approx(P, rel=0.05)


def test_simulate_rejects_empty_batch(scalar_model):
    with pytest.raises(ContractViolationError):
        simulate(scalar_model, [0.9], GaussianDensity.scalar(0.0, 1.0), 0, seed=0)


def test_stationary_cov_scalar(scalar_model):
    assert stationary_cov(scalar_model, [0.9])[0, 0] == pytest.approx(1.0526315789473684, rel=1e-12)
    assert stationary_cov(scalar_model, [0.0])[0, 0] == pytest.approx(0.2, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_stationary_cov_matches_fixed_point(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((2, 2))
    F *= 0.7 / np.max(np.abs(np.linalg.eigvals(F)))
    A = rng.standard_normal((2, 2))
    Q = A @ A.T + 0.1 * np.eye(2)
    model = ParamAffineModel(n=2, m=1, d=0, F_basis=(F,), H_basis=(np.ones((1, 2)),), Q=Q, R=np.eye(1))
    P = stationary_cov(model, [])
    assert np.linalg.norm(P - F @ P @ F.T - Q) < 1e-10 * max(1.0, np.linalg.norm(P))

    oracle = np.zeros((2, 2))
    for _ in range(500):
        oracle = F @ oracle @ F.T + Q
    np.testing.assert_allclose(P, oracle, rtol=1e-8)


def test_stationary_cov_rejects_unstable(scalar_model):
    with pytest.raises(NonStationaryError):
        stationary_cov(scalar_model, [1.0])


def test_model_validation():
    with pytest.raises(ModelError):
        ParamAffineModel(n=1, m=1, d=0, F_basis=(np.eye(1),), H_basis=(np.eye(1),), Q=-np.eye(1), R=np.eye(1))
    with pytest.raises(ModelError):
        ParamAffineModel(
            n=2, m=1, d=0, F_basis=(np.eye(2),), H_basis=(np.ones((1, 2)),), Q=np.array([[1.0, 0.5], [0.0, 1.0]]), R=1.0
        )
    with pytest.raises(ModelError):
        ParamAffineModel(n=1, m=1, d=1, F_basis=(np.eye(1),), H_basis=(np.eye(1), np.eye(1)), Q=1.0, R=1.0)

    degenerate = scalar_benchmark_model(q=0.0, r=0.09)
    assert degenerate.degenerate_noise
    assert not scalar_benchmark_model().degenerate_noise


def test_state_stack_round_trip():
    means = np.arange(12.0).reshape(3, 4)
    X = stack_states(means)
    np.testing.assert_array_equal(X[:3], means[:, 0])
    np.testing.assert_array_equal(unstack_states(X, 3), means)
