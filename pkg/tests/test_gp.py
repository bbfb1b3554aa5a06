import math

import numpy as np
import pytest

from simflock.errors import SingularKernelError
from simflock.gp import (
    KernelParams,
    NOISE_FLOOR,
    default_kernel,
    expected_improvement,
    gp_fit,
    gp_posterior,
    kernel_matrix,
    log_marginal_likelihood,
)


def dense_posterior(state, query):
    """Oracle: same predictive equations via a dense solve, no Cholesky."""
    k_train = kernel_matrix(state.kernel, state.x, state.x)
    k_noisy = k_train + state.kernel.noise_var * np.eye(len(state.x))
    k_star = kernel_matrix(state.kernel, np.atleast_2d(query), state.x)
    mean_std = k_star @ np.linalg.solve(k_noisy, state.y)
    var_std = state.kernel.signal_var - np.einsum(
        "ij,ij->i", k_star, k_star @ np.linalg.inv(k_noisy)
    )
    mean = state.y_mean + state.y_scale * mean_std
    var = state.y_scale**2 * np.maximum(var_std, 0.0)
    return mean, var


def separated_points(rng, n, d, min_dist=0.05):
    points = []
    while len(points) < n:
        cand = rng.random(d)
        if all(np.linalg.norm(cand - p) >= min_dist for p in points):
            points.append(cand)
    return np.array(points)


def test_posterior_matches_dense_oracle_many_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(3, 21))
        d = int(rng.integers(1, 5))
        x = rng.random((n, d))
        y = rng.normal(size=n)
        kernel = KernelParams(
            lengthscales=tuple(rng.uniform(0.2, 2.0, d)),
            signal_var=float(rng.uniform(0.5, 2.0)),
            noise_var=float(rng.uniform(1e-6, 1e-2)),
        )
        state = gp_fit(x, y, kernel=kernel, optimize=False)
        query = rng.random((5, d))
        mean, var = gp_posterior(state, query)
        mean_ref, var_ref = dense_posterior(state, query)
        assert np.allclose(mean, mean_ref, atol=1e-6)
        assert np.allclose(var, var_ref, atol=1e-6)


def test_interpolation_at_training_points_with_noise_floor():
    rng = np.random.default_rng(3)
    x = separated_points(rng, 8, 2)
    y = rng.normal(size=8)
    kernel = KernelParams(lengthscales=(0.5, 0.5), signal_var=1.0, noise_var=NOISE_FLOOR)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    mean, _ = gp_posterior(state, x)
    assert np.max(np.abs(mean - y)) <= 1e-6


def test_fit_example_two_points():
    state = gp_fit(np.array([[0.2], [0.8]]), np.array([0.0, 1.0]),
                   rng=np.random.default_rng(0))
    mean, _ = gp_posterior(state, np.array([[0.2]]))
    assert abs(mean[0] - 0.0) <= 3.0 * math.sqrt(state.kernel.noise_var)


def test_duplicate_rows_survive_via_jitter():
    x = np.array([[0.3, 0.3], [0.3, 0.3], [0.7, 0.1]])
    y = np.array([0.0, 1.0, 0.5])
    kernel = KernelParams(lengthscales=(0.5, 0.5), noise_var=NOISE_FLOOR)
    state = gp_fit(x, y, kernel=kernel, optimize=False)  # must not raise
    assert state.chol.shape == (3, 3)


def test_constant_targets_give_tiny_variance_and_zero_ei():
    x = np.linspace(0.1, 0.9, 6)[:, None]
    y = np.full(6, 2.5)
    state = gp_fit(x, y, rng=np.random.default_rng(1))
    _, var = gp_posterior(state, x)
    assert np.all(var <= state.kernel.noise_var * state.y_scale**2 + 1e-9)
    ei = expected_improvement(state, np.linspace(0, 1, 50)[:, None], best=2.5)
    assert np.all(ei <= 1e-4)


def test_variance_reverts_to_prior_far_from_data():
    # pre-standardized targets so y_scale == 1 and the prior variance is
    # exactly signal_var
    x = np.array([[0.1, 0.1], [0.15, 0.2]])
    y = np.array([-1.0, 1.0])
    kernel = KernelParams(lengthscales=(0.01, 0.01), signal_var=1.7, noise_var=1e-8)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    _, var = gp_posterior(state, np.array([[0.95, 0.95]]))
    assert var[0] == pytest.approx(1.7, rel=0.01)


def test_variance_clamped_at_zero():
    x = np.array([[0.2], [0.21], [0.8]])
    y = np.array([0.0, 0.01, 1.0])
    kernel = KernelParams(lengthscales=(1.0,), noise_var=NOISE_FLOOR)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    _, var = gp_posterior(state, x)
    assert np.all(var >= 0.0)


def test_cholesky_identity_of_state():
    rng = np.random.default_rng(8)
    x = separated_points(rng, 10, 3)
    y = rng.normal(size=10)
    state = gp_fit(x, y, rng=rng)
    k = kernel_matrix(state.kernel, x, x) + state.kernel.noise_var * np.eye(10)
    reconstructed = state.chol @ state.chol.T
    rel = np.linalg.norm(reconstructed - k) / np.linalg.norm(k)
    assert rel <= 1e-8


def test_lml_improves_after_optimization():
    rng = np.random.default_rng(12)
    x = separated_points(rng, 12, 1)
    y = np.sin(6 * x[:, 0]) + 0.01 * rng.normal(size=12)
    y_std = (y - y.mean()) / y.std()
    start = default_kernel(1)
    before = log_marginal_likelihood(start, x, y_std)
    state = gp_fit(x, y, kernel=start, rng=np.random.default_rng(0))
    after = log_marginal_likelihood(state.kernel, x, y_std)
    assert after >= before


def test_ei_zero_at_zero_variance():
    x = np.array([[0.2], [0.8]])
    y = np.array([0.0, 1.0])
    kernel = KernelParams(lengthscales=(0.3,), noise_var=NOISE_FLOOR)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    # at a training point the variance is numerically ~0; EI must not go negative
    ei = expected_improvement(state, x, best=0.0)
    assert np.all(ei >= 0.0)
    assert ei[0] <= 1e-4


def test_ei_closed_form_at_mean_equal_best():
    x = np.array([[0.2], [0.8]])
    y = np.array([-1.0, 1.0])
    kernel = KernelParams(lengthscales=(0.2,), signal_var=1.0, noise_var=1e-6)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    query = np.array([[0.5]])
    mean, var = gp_posterior(state, query)
    assert mean[0] == pytest.approx(0.0, abs=1e-9)  # symmetric midpoint
    ei = expected_improvement(state, query, best=float(mean[0]))
    assert ei[0] == pytest.approx(math.sqrt(var[0]) / math.sqrt(2 * math.pi), rel=1e-9)


def test_ei_nonnegative_everywhere():
    rng = np.random.default_rng(99)
    x = separated_points(rng, 12, 2)
    y = rng.normal(size=12)
    state = gp_fit(x, y, rng=rng)
    queries = rng.random((10_000, 2))
    for mode in ("min", "max"):
        best = float(y.min() if mode == "min" else y.max())
        ei = expected_improvement(state, queries, best, mode)
        assert np.all(ei >= 0.0)


def test_fit_requires_two_points():
    with pytest.raises(ValueError):
        gp_fit(np.array([[0.5]]), np.array([1.0]))


def test_singular_kernel_error_is_reachable():
    # identical rows with noise pinned at the floor and a signal variance so
    # large the escalated jitter vanishes in rounding
    x = np.zeros((6, 1))
    y = np.arange(6.0)
    kernel = KernelParams(lengthscales=(1.0,), signal_var=1e14, noise_var=NOISE_FLOOR)
    with pytest.raises(SingularKernelError):
        gp_fit(x, y, kernel=kernel, optimize=False)


def test_jitter_escalation_rescues_moderate_singularity():
    x = np.zeros((6, 1))
    y = np.arange(6.0)
    kernel = KernelParams(lengthscales=(1.0,), signal_var=1e10, noise_var=NOISE_FLOOR)
    state = gp_fit(x, y, kernel=kernel, optimize=False)
    assert state.kernel.noise_var <= 1e-4
