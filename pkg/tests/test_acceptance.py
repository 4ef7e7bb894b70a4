"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import math
import time

import numpy as np
import pytest
import scipy.linalg as la

from leqgpursuit import (SimConfig, ThetaAboveCritical, assemble, basic_spec, full_info_synthesis,
                         mc_cost, output_feedback_synthesis, rs_structured_filter_Y, rs_structured_X,
                         structured_output_cost, theta_star_full, theta_star_output)
from leqgpursuit.cli import RunContext, cmd_trajectories
from leqgpursuit.config import preset
from leqgpursuit.riccati import care_residual, solve_care, solve_filter_care
from leqgpursuit.structured import spectral_radius
from leqgpursuit.synthesis import control_gare_terms, filter_gare_terms

from conftest import random_spec

pytestmark = pytest.mark.acceptance


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False

    def check(self):
        assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def test_lqg_cost_invariance(criterion):
    criterion(1, "LQG cost per agent independent of n")
    with Budget(5) as b:
        worst = 0.0
        for eps in (0.0, 0.1):
            for d in (1, 2):
                ref = full_info_synthesis(assemble(basic_spec(d=d, epsilon=eps), 1), 0.0).cost_per_agent
                for n in range(1, 17):
                    j = full_info_synthesis(assemble(basic_spec(d=d, epsilon=eps), n), 0.0).cost_per_agent
                    worst = max(worst, abs(j - ref))
    assert worst <= 1e-8
    b.check()


def test_closed_form_equivalence(criterion):
    criterion(2, "closed-form risk-sensitive solution equals dense GARE (eps = 0)")
    with Budget(20) as b:
        for seed in range(9):
            rng = np.random.default_rng(2000 + seed)
            d = 1 + seed % 3
            spec = random_spec(rng, d, m=1 + (seed // 3) % d)
            theta = 0.5 * theta_star_full(assemble(spec, 1), tol=1e-8)
            single = full_info_synthesis(assemble(spec, 1), theta).cost_per_agent
            for n in (2, 4, 8):
                dense = full_info_synthesis(assemble(spec, n), theta)
                closed = rs_structured_X(spec, n, theta).X_n.dense
                err = la.norm(dense.X_n.X - closed, "fro") / la.norm(closed, "fro")
                assert err <= 1e-7, (seed, n, err)
                assert abs(dense.cost_per_agent - single) <= 1e-8, (seed, n)
    b.check()


def test_breakpoint_at_four_agents(criterion):
    criterion(3, "theta = 0.97, eps = 0.1 infeasible for n <= 3, feasible for n >= 4; theta*(n) = n/(n+eps)")
    eps = 0.1
    with Budget(10) as b:
        for n in range(1, 9):
            sys = assemble(basic_spec(epsilon=eps), n)
            if n <= 3:
                with pytest.raises(ThetaAboveCritical):
                    full_info_synthesis(sys, 0.97)
            else:
                assert math.isfinite(full_info_synthesis(sys, 0.97).cost_per_agent)
            assert abs(theta_star_full(sys, tol=1e-6) - n / (n + eps)) <= 1e-4
    b.check()


def test_theta_star_constant_at_eps0(criterion):
    criterion(4, "theta*(n) = 1 for all n at eps = 0")
    for n in range(1, 9):
        ts = theta_star_full(assemble(basic_spec(), n), tol=1e-6)
        assert 1 - 1e-3 <= ts <= 1 + 1e-3


def test_estimation_rate(criterion):
    criterion(5, "output-feedback LQG cost approaches the full-information cost at rate 1/sqrt(n)")
    eps = 1e-6
    spec = basic_spec(epsilon=eps)
    X1 = full_info_synthesis(assemble(basic_spec(), 1), 0.0)
    trWX1 = float(np.trace(spec.W @ X1.X_n.X))
    Y1 = solve_filter_care(*filter_gare_terms(assemble(spec, 1), 0.0)).X
    trY1Q = float(np.trace(Y1 @ spec.Q))
    for n in (4, 16, 64):
        j = structured_output_cost(spec, n, 0.0)
        assert abs((j - trWX1) * math.sqrt(n) - trY1Q) <= 0.05 * trY1Q, n
        if n <= 16:
            dense = output_feedback_synthesis(assemble(spec, n), 0.0).cost_per_agent
            assert abs((dense - trWX1) * math.sqrt(n) - trY1Q) <= 0.05 * trY1Q, n
            assert dense == pytest.approx(j, rel=1e-3)


def test_theta_I_star_curve(criterion):
    criterion(6, "theta_I*(n) = n/(n+1), increasing, rho(theta Y~ X1) = sqrt(n) at the boundary")
    eps = 1e-8
    spec = basic_spec(epsilon=eps)
    values = []
    for n in range(1, 7):
        t = theta_star_output(assemble(spec, n), tol=1e-7)
        assert abs(t - n / (n + 1)) <= 1e-3, n
        Yt = rs_structured_filter_Y(spec, n, t).Y_tilde_1n
        X1 = rs_structured_X(basic_spec(), n, t).X_1
        assert abs(spectral_radius(t * Yt @ X1) - math.sqrt(n)) <= 1e-3, n
        values.append(t)
    assert all(b > a for a, b in zip(values, values[1:]))


def test_monte_carlo_vs_analytic(criterion):
    criterion(7, "Monte Carlo agrees with the analytic cost at theta = 0 and theta = 0.5")
    sys = assemble(basic_spec(), 1)
    cfg = SimConfig(dt=1e-3, horizon=200.0, trials=2000, seed=20240501)
    with Budget(60) as b:
        c0 = full_info_synthesis(sys, 0.0)
        r0 = mc_cost(sys, c0, 0.0, cfg)
        c5 = full_info_synthesis(sys, 0.5)
        r5 = mc_cost(sys, c5, 0.5, cfg)
    print(f"\ntheta=0: {r0.mc_estimate:.5f} +- {r0.std_error:.5f} (analytic 1); "
          f"theta=0.5: {r5.mc_estimate:.5f} +- {r5.std_error:.5f} (analytic {math.sqrt(2):.5f}, {r5.method}); "
          f"{b.elapsed:.1f}s")
    assert abs(r0.mc_estimate - 1.0) <= 3 * r0.std_error
    assert abs(r0.mc_estimate - 1.0) <= 0.05
    assert abs(r5.mc_estimate - math.sqrt(2)) <= 0.1 * math.sqrt(2)
    b.check()


def _collect_solutions():
    """(A, S, Qc, solution) tuples from the basic example and random models."""
    out = []
    for n in (1, 2, 5):
        for eps in (0.0, 0.1):
            sys = assemble(basic_spec(d=2, epsilon=eps), n)
            for theta in (-0.5, 0.0, 0.5, 0.9):
                A, S, Qc = control_gare_terms(sys, theta)
                out.append((A, S, Qc, solve_care(A, S, Qc)))
                if eps > 0:
                    A, T, Wc = filter_gare_terms(sys, theta)
                    out.append((A.T, T, Wc, solve_filter_care(A, T, Wc)))
    for seed in range(10):
        spec = random_spec(np.random.default_rng(seed), 1 + seed % 3, epsilon=0.2)
        sys = assemble(spec, 3)
        theta = 0.5 * theta_star_full(sys)
        for th in (0.0, theta):
            A, S, Qc = control_gare_terms(sys, th)
            out.append((A, S, Qc, solve_care(A, S, Qc)))
    return out


def test_solver_contracts(criterion):
    criterion(8, "Riccati residual, definiteness, Hurwitz contracts and the 100-point scalar oracle")
    for A, S, Qc, sol in _collect_solutions():
        X = sol.X
        res = la.norm(care_residual(A, S, Qc, X), "fro")
        assert res <= 1e-9 * max(1.0, la.norm(X, "fro"))
        assert la.eigvalsh(X).min() > 0
        assert np.max(la.eigvals(A - S @ X).real) < 0
    grid = [(a, s, q) for a in np.linspace(-3, 3, 5) for s in np.geomspace(0.1, 10, 5)
            for q in np.geomspace(0.1, 10, 4)]
    assert len(grid) == 100
    for a, s, q in grid:
        disc = math.sqrt(a * a + s * q)
        x = (a + disc) / s if a >= 0 else q / (disc - a)
        got = solve_care([[a]], [[s]], [[q]]).X[0, 0]
        assert abs(got - x) <= 1e-12 * max(1.0, x), (a, s, q)


def _sign_changes(x):
    s = np.sign(x)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def test_trajectory_classes(criterion, tmp_path):
    criterion(9, "frozen-evader trajectory classes and byte-identical reruns")
    cfg = preset()
    cfg.output.dir = str(tmp_path / "a")
    cfg.trajectories.evader_mode = "frozen"
    ctx = RunContext("trajectories", cfg, {"mode": "all"})
    runs = {mode: cmd_trajectories(cfg, mode, ctx) for mode in ("risk_averse", "risk_neutral", "risk_seeking")}
    theta_bar = 0.8 * theta_star_full(assemble(cfg.spec(), cfg.trajectories.n))
    assert runs["risk_averse"][1]["theta"] == pytest.approx(theta_bar)
    assert runs["risk_seeking"][1]["theta"] == pytest.approx(-theta_bar)
    assert runs["risk_neutral"][1]["theta"] == 0.0

    for mode in ("risk_neutral", "risk_seeking"):
        x = runs[mode][0].x
        assert all(_sign_changes(x[:, i]) == 0 for i in range(x.shape[1])), mode
        assert np.all(np.diff(np.abs(x), axis=0) <= 1e-12), mode
    # decoupled: each neutral agent follows its own scalar loop from its own start
    traj = runs["risk_neutral"][0]
    dt = cfg.sim.dt
    steps = np.round(traj.times / dt).astype(int)
    assert np.allclose(traj.x, traj.x[0][None, :] * (1 - dt) ** steps[:, None], rtol=1e-9)
    xa = runs["risk_averse"][0].x
    assert sum(_sign_changes(xa[:, i]) for i in range(xa.shape[1])) >= 1

    cfg.output.dir = str(tmp_path / "b")
    ctx_b = RunContext("trajectories", cfg, {"mode": "all"})
    for mode in runs:
        cmd_trajectories(cfg, mode, ctx_b)
    for name in ctx.files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
