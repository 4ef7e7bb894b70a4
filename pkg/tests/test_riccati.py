import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from leqgpursuit import IllConditioned, NoSolution, assemble, basic_spec
from leqgpursuit.riccati import (care_residual, has_pd_stabilizing_solution, is_stabilizing, solve_care,
                                 solve_filter_care,
                                 stabilizing_solution)
from leqgpursuit.synthesis import control_gare_terms

from conftest import random_spec


def scalar_root(a, s, q):
    """Root of ``s x^2 - 2 a x - q = 0`` with ``a - s x < 0``, in cancellation-free form."""
    disc = np.sqrt(a * a + s * q)
    return (a + disc) / s if a >= 0 else q / (disc - a)


def assert_contract(A, S, Qc, sol):
    X = sol.X
    assert np.array_equal(X, X.T)
    res = la.norm(care_residual(np.atleast_2d(A), np.atleast_2d(S), np.atleast_2d(Qc), X), "fro")
    assert res <= 1e-9 * max(1.0, la.norm(X, "fro"))
    assert sol.residual_norm <= 1e-9 * max(1.0, la.norm(X, "fro"))
    assert la.eigvalsh(X).min() > 0
    assert sol.min_eigenvalue > 0
    assert sol.closed_loop_spectral_abscissa < 0
    assert is_stabilizing(A, S, X)


@pytest.mark.parametrize("S,Qc,expected", [(1.0, 1.0, 1.0), (0.25, 1.0, 2.0)])
def test_scalar_examples(S, Qc, expected):
    sol = solve_care([[0.0]], [[S]], [[Qc]])
    assert sol.X[0, 0] == pytest.approx(expected, rel=1e-12)


def test_scalar_negative_s_has_no_solution():
    with pytest.raises(NoSolution):
        solve_care([[0.0]], [[-0.5]], [[1.0]])


@pytest.mark.parametrize("T,expected", [(1.0, 1.0), (0.5, np.sqrt(2.0))])
def test_filter_scalar_examples(T, expected):
    assert solve_filter_care([[0.0]], [[T]], [[1.0]]).X[0, 0] == pytest.approx(expected, rel=1e-12)


def test_filter_scalar_negative_t():
    with pytest.raises(NoSolution):
        solve_filter_care([[0.0]], [[-0.1]], [[1.0]])


def scalar_grid():
    a = np.linspace(-3.0, 3.0, 5)
    s = np.geomspace(0.1, 10.0, 5)
    q = np.geomspace(0.1, 10.0, 4)
    return [(x, y, z) for x in a for y in s for z in q]


def test_scalar_grid_has_100_points():
    assert len(scalar_grid()) == 100


@pytest.mark.parametrize("a,s,q", scalar_grid())
def test_scalar_oracle_grid(a, s, q):
    sol = solve_care([[a]], [[s]], [[q]])
    x = scalar_root(a, s, q)
    assert abs(sol.X[0, 0] - x) <= 1e-12 * max(1.0, x)
    assert a - s * sol.X[0, 0] < 0


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 20), st.floats(0.05, 20))
def test_scalar_oracle_property(a, s, q):
    x = scalar_root(a, s, q)
    assert solve_care([[a]], [[s]], [[q]]).X[0, 0] == pytest.approx(x, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_random_lqr_matches_scipy(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    B = rng.normal(size=(d, d)) + 2 * np.eye(d)
    q = rng.normal(size=(d, d))
    Q = q @ q.T + 0.1 * np.eye(d)
    S = B @ B.T
    sol = solve_care(A, S, Q)
    assert_contract(A, S, Q, sol)
    ref = la.solve_continuous_are(A, B, Q, np.eye(d))
    assert np.allclose(sol.X, ref, rtol=1e-8, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_duality(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    c = rng.normal(size=(d, d)) + 2 * np.eye(d)
    w = rng.normal(size=(d, d))
    T, W = c @ c.T, w @ w.T + 0.1 * np.eye(d)
    Y = solve_filter_care(A, T, W)
    X = solve_care(A.T, T, W)
    assert np.allclose(Y.X, X.X.T, rtol=0, atol=1e-10 * max(1.0, la.norm(Y.X)))
    # filter equation itself, and the filter closed loop A - Y T is Hurwitz
    resid = Y.X @ A.T + A @ Y.X - Y.X @ T @ Y.X + W
    assert la.norm(resid, "fro") <= 1e-9 * max(1.0, la.norm(Y.X, "fro"))
    assert np.max(la.eigvals(A - Y.X @ T).real) < 0


def test_is_stabilizing_examples():
    assert is_stabilizing([[0.0]], [[1.0]], [[1.0]])
    assert not is_stabilizing([[1.0]], [[1.0]], [[0.5]])


def test_basic_n2_closed_loop_spectrum():
    sys = assemble(basic_spec(), 2)
    A, S, Qc = control_gare_terms(sys, 0.5)
    sol = solve_care(A, S, Qc)
    assert_contract(A, S, Qc, sol)
    # A - S X with X = I/2 + E/4 * X^ has eigenvalues -n X~/n and -n(X~+X^)/n
    got = np.sort(la.eigvals(A - S @ sol.X).real)
    # decoupled mode: LQG loop -b^2/r * x~ = -1; coupled mode: single-agent loop -(1 - theta) * sqrt(2)
    assert np.allclose(got, [-1.0, -0.5 * np.sqrt(2.0)], atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_monotone_boundary_is_a_ray(seed):
    spec = random_spec(np.random.default_rng(seed), 2, m=1)
    BRB = spec.B @ la.solve(spec.R, spec.B.T)
    thetas = np.linspace(-2.0, 3.0, 101)
    ok = []
    for th in thetas:
        try:
            solve_care(spec.A, BRB - th * spec.W, spec.Q)
            ok.append(True)
        except (NoSolution, IllConditioned):
            ok.append(False)
    ok = np.array(ok)
    assert ok[0]
    if not ok.all():
        first_fail = np.argmin(ok)
        assert not ok[first_fail:].any()


def test_unstabilizable_pair_is_no_solution():
    # a = 1 unstable with no input authority: Hamiltonian eigenvalues +-1 but X <= 0
    with pytest.raises(NoSolution):
        solve_care([[1.0]], [[0.0]], [[1.0]])


def test_stabilizing_solution_without_pd_requirement():
    # S < 0 with a < 0: stabilizing solution exists but is negative
    X, res = stabilizing_solution([[-2.0]], [[-1.0]], [[-1.0]])
    assert res < 1e-12
    assert -2.0 - (-1.0) * X[0, 0] < 0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_care(np.eye(2), np.eye(3), np.eye(2))


@pytest.mark.parametrize("a,s,q", scalar_grid()[::7])
def test_existence_test_agrees_on_scalars(a, s, q):
    assert has_pd_stabilizing_solution([[a]], [[s]], [[q]])
    assert not has_pd_stabilizing_solution([[a]], [[-s]], [[q]]) or a < 0


def test_existence_test_agrees_with_solver_across_theta():
    spec = random_spec(np.random.default_rng(105), 3, m=2)
    BRB = spec.B @ la.solve(spec.R, spec.B.T)
    for th in np.linspace(-1.0, 0.2, 61):
        S = BRB - th * spec.W
        exists = has_pd_stabilizing_solution(spec.A, S, spec.Q)
        try:
            solve_care(spec.A, S, spec.Q)
            solved = True
        except NoSolution:
            solved = False
        except IllConditioned:
            continue
        assert exists == solved, th


def test_existence_near_pole():
    # this model's critical value comes from a solution eigenvalue diverging,
    # not from the Hamiltonian reaching the imaginary axis
    spec = random_spec(np.random.default_rng(105), 3, m=2)
    BRB = spec.B @ la.solve(spec.R, spec.B.T)
    assert has_pd_stabilizing_solution(spec.A, BRB - 0.084 * spec.W, spec.Q)
    assert not has_pd_stabilizing_solution(spec.A, BRB - 0.086 * spec.W, spec.Q)
    X, _ = stabilizing_solution(spec.A, BRB - 0.086 * spec.W, spec.Q)
    assert la.eigvalsh(X).min() < 0
