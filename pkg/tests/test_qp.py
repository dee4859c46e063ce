import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecodrive.qp import QPStatus, kkt_residuals, solve_qp
from oracles import qp_active_set_oracle


def random_qp(rng, n=4, m=6):
    R = rng.normal(size=(n, n))
    H = R @ R.T + 0.1 * np.eye(n)
    f = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    h = rng.uniform(0.1, 1.0, m)  # z = 0 is strictly feasible
    return H, f, G, h


def test_interior_minimizer_is_closed_form():
    rng = np.random.default_rng(0)
    H, f, _, _ = random_qp(rng)
    z_star = np.linalg.solve(H, -f)
    G = np.vstack([np.eye(4), -np.eye(4)])
    h = np.concatenate([z_star + 10, -z_star + 10])
    res = solve_qp(H, f, G, h)
    assert res.status is QPStatus.OPTIMAL
    assert np.allclose(res.x, z_star, atol=1e-8)


def test_equality_constrained_matches_kkt_solve():
    H = np.diag([2.0, 4.0])
    f = np.array([-2.0, 0.0])
    A, b = np.array([[1.0, 1.0]]), np.array([1.0])
    res = solve_qp(H, f, A=A, b=b)
    K = np.block([[H, A.T], [A, np.zeros((1, 1))]])
    want = np.linalg.solve(K, np.concatenate([-f, b]))[:2]
    assert np.allclose(res.x, want, atol=1e-8)


def test_linear_program():
    # min -z1 - z2 on the unit box corner
    G = np.vstack([np.eye(2), -np.eye(2)])
    h = np.array([1.0, 1.0, 0.0, 0.0])
    res = solve_qp(np.zeros((2, 2)), np.array([-1.0, -1.0]), G, h)
    assert res.status is QPStatus.OPTIMAL and np.allclose(res.x, [1, 1], atol=1e-7)


def test_infeasible_returns_farkas_certificate():
    G = np.array([[1.0, 0.0], [-1.0, 0.0]])
    h = np.array([-1.0, -1.0])  # z1 <= -1 and z1 >= 1
    res = solve_qp(np.eye(2), np.zeros(2), G, h)
    assert res.status is QPStatus.INFEASIBLE
    y = res.certificate
    assert np.all(y >= -1e-9) and np.allclose(G.T @ y, 0, atol=1e-6) and h @ y < 0


def test_matches_active_set_oracle_on_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(20):
        H, f, G, h = random_qp(rng)
        res = solve_qp(H, f, G, h)
        want = qp_active_set_oracle(H, f, G, h)
        assert res.status is QPStatus.OPTIMAL
        assert np.allclose(res.x, want, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 8))
def test_optimal_results_pass_independent_kkt_check(seed, n, m):
    rng = np.random.default_rng(seed)
    H, f, G, h = random_qp(rng, n, m)
    res = solve_qp(H, f, G, h)
    assert res.status is QPStatus.OPTIMAL
    r = kkt_residuals(H, f, G, h, None, None, res.x, res.y, np.zeros(0))
    assert max(r.values()) <= 1e-6
    assert np.all(G @ res.x <= h + 1e-6)


def test_deterministic():
    rng = np.random.default_rng(2)
    H, f, G, h = random_qp(rng)
    a, b = solve_qp(H, f, G, h), solve_qp(H, f, G, h)
    assert np.array_equal(a.x, b.x)
