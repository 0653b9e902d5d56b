import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltibound.errors import DimensionError, InputError, StabilityError
from ltibound.matnum import (
    cholesky_psd,
    geometric_norm_sum,
    markov_norm_series,
    operator_norm_2,
    solve_discrete_lyapunov,
    spectral_radius,
)


def stable_matrix(rng, n, radius):
    A = rng.standard_normal((n, n))
    return A * (radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12))


def brute_norm_sum(M, power, terms=4000):
    total, P = 0.0, np.eye(M.shape[0])
    for _ in range(terms):
        total += np.linalg.norm(P, 2) ** power
        P = P @ M
    return total


def test_spectral_radius_and_norm_basic():
    M = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert spectral_radius(M) == 0.0
    assert operator_norm_2(M) == pytest.approx(2.0)
    assert operator_norm_2(np.diag([3.0, -4.0])) == pytest.approx(4.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_spectral_radius_below_operator_norm(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    M = rng.standard_normal((n, n))
    assert spectral_radius(M) <= operator_norm_2(M) + 1e-12


@pytest.mark.parametrize("power", [1, 2])
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_geometric_norm_sum_against_brute_force(power, seed):
    rng = np.random.default_rng(seed)
    M = stable_matrix(rng, 3, 0.85)
    res = geometric_norm_sum(M, power)
    assert res.value == pytest.approx(brute_norm_sum(M, power), rel=1e-10)
    assert res.truncation_bound <= 1e-12
    # k=0 contributes 1 and k=1 contributes ||M||^p
    assert res.value >= max(1.0, operator_norm_2(M) ** power)


def test_geometric_norm_sum_nilpotent_exact():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    res = geometric_norm_sum(M, 1)
    assert res.value == pytest.approx(2.0, abs=0.0)
    assert res.truncation_bound == 0.0


def test_geometric_norm_sum_tolerance_consistency():
    rng = np.random.default_rng(7)
    M = stable_matrix(rng, 4, 0.9)
    coarse = geometric_norm_sum(M, 1, tol=1e-6).value
    fine = geometric_norm_sum(M, 1, tol=1e-7).value
    assert abs(coarse - fine) <= 1e-6


def test_geometric_norm_sum_rejects_unstable():
    with pytest.raises(StabilityError):
        geometric_norm_sum(np.eye(2), 1)
    with pytest.raises(InputError):
        geometric_norm_sum(0.5 * np.eye(2), 3)


def test_markov_norm_series_against_brute_force():
    rng = np.random.default_rng(11)
    A = stable_matrix(rng, 3, 0.8)
    L = rng.standard_normal((2, 3))
    R = rng.standard_normal((3, 2))
    res = markov_norm_series(A, L, R)
    brute, P = 0.0, np.eye(3)
    for _ in range(2000):
        brute += np.linalg.norm(L @ P @ R, 2)
        P = P @ A
    assert res.value == pytest.approx(brute, rel=1e-10)


def test_markov_norm_series_shape_check():
    with pytest.raises(DimensionError):
        markov_norm_series(np.eye(2) * 0.5, np.ones((1, 3)), np.ones((2, 1)))


def test_lyapunov_matches_fixed_point_iteration():
    rng = np.random.default_rng(3)
    A = stable_matrix(rng, 3, 0.9)
    Q0 = rng.standard_normal((3, 3))
    Q = Q0 @ Q0.T
    P = solve_discrete_lyapunov(A, Q)
    # Independently coded fixed-point iteration P <- A P A^T + Q.
    P_it = Q.copy()
    for _ in range(2000):
        P_it = A @ P_it @ A.T + Q
    np.testing.assert_allclose(P, P_it, rtol=1e-10, atol=1e-10)


def test_lyapunov_residual_on_many_random_systems():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        A = stable_matrix(rng, n, float(rng.uniform(0.1, 0.95)))
        Q0 = rng.standard_normal((n, n))
        Q = Q0 @ Q0.T
        P = solve_discrete_lyapunov(A, Q)
        residual = operator_norm_2(P - A @ P @ A.T - Q)
        assert residual <= 1e-12 * (1.0 + operator_norm_2(Q))


def test_lyapunov_input_validation():
    with pytest.raises(StabilityError):
        solve_discrete_lyapunov(np.eye(2), np.eye(2))
    with pytest.raises(InputError):
        solve_discrete_lyapunov(0.5 * np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        solve_discrete_lyapunov(0.5 * np.eye(2), np.eye(3))


@pytest.mark.parametrize("seed", range(5))
def test_cholesky_psd_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    R = rng.standard_normal((n, n))
    Q = R @ R.T
    L = cholesky_psd(Q)
    assert np.allclose(np.triu(L, 1), 0.0)
    assert operator_norm_2(L @ L.T - Q) <= 1e-10 * (1.0 + operator_norm_2(Q))


def test_cholesky_psd_rank_deficient():
    v = np.array([[1.0], [2.0], [-1.0]])
    Q = v @ v.T
    L = cholesky_psd(Q)
    assert operator_norm_2(L @ L.T - Q) <= 1e-10 * (1.0 + operator_norm_2(Q))
    assert cholesky_psd(np.zeros((2, 2))).tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_cholesky_psd_rejects_indefinite():
    with pytest.raises(InputError):
        cholesky_psd(np.diag([1.0, -0.5]))
