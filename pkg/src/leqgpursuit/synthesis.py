"""Dense LEQG synthesis for the n-agent tracking problem.

Full information::

    S_n(theta) = n B_n R_n^-1 B_n' - theta (W_n + eps Z_n)
    A_n'X + X A_n - X S_n(theta) X + Q_n / n = 0
    u = -n R_n^-1 B_n' X x,        J* = Tr((W_n + eps Z_n) X)

Output feedback additionally solves the filter equation with
``T_n(theta) = C_n' V_n^-1 C_n - theta Q_n / n`` and requires
``I - theta Y X`` to have positive spectrum.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DestabilizingController, ModelAssumptionViolated, NoSolution, SigmaExceedsY, ThetaAboveCritical
from .riccati import GareSolution, _stable_basis, has_pd_stabilizing_solution, solve_care, solve_filter_care

__all__ = [
    "FullInfoController",
    "OutputFeedbackController",
    "InitialCondition",
    "default_initial_condition",
    "control_gare_terms",
    "filter_gare_terms",
    "full_info_synthesis",
    "output_feedback_synthesis",
    "full_info_cost",
    "output_feedback_cost",
    "theta_star_full",
    "theta_star_output",
    "is_controllable",
    "is_observable",
]

RANK_RTOL = 1e-10
BISECTION_MAXITER = 60


def _rank_ok(M, size):
    sv = la.svdvals(M)
    if sv.size == 0 or sv[0] == 0:
        return size == 0
    return int(np.sum(sv > RANK_RTOL * sv[0])) >= size


def is_controllable(A, B):
    """Kalman rank test on ``[B, AB, ..., A^{k-1}B]``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    k = A.shape[0]
    blocks = [B]
    for _ in range(k - 1):
        blocks.append(A @ blocks[-1])
    return _rank_ok(np.hstack(blocks), k)


def is_observable(A, C):
    return is_controllable(np.atleast_2d(A).T, np.atleast_2d(C).T)


def _noise_pair_controllable(sys):
    """PBH test for ``(A_n, [sqrt(eps) F_n, -G_n])``.

    ``A_n = I_n (x) A`` shares the eigenvalues of ``A``, so only ``d``
    rank checks of size ``nd`` are needed instead of an ``nd``-power
    Kalman matrix.
    """
    A_n = sys.A_n.dense
    Bn = np.hstack([np.sqrt(sys.epsilon) * sys.F_n.dense, -sys.G_n])
    k = A_n.shape[0]
    for lam in np.unique(np.round(la.eigvals(sys.spec.A), 12)):
        M = np.hstack([A_n - lam * np.eye(k), Bn])
        if not _rank_ok(M, k):
            return False
    return True


def _check_full_info_assumptions(spec):
    if not is_controllable(spec.A, spec.B):
        raise ModelAssumptionViolated("(A, B) is not controllable")
    if not is_observable(spec.A, spec.Q):
        raise ModelAssumptionViolated("(A, Q) is not observable")


def _check_output_assumptions(sys):
    _check_full_info_assumptions(sys.spec)
    if not is_observable(sys.spec.A, sys.spec.C):
        raise ModelAssumptionViolated("(A, C) is not observable")
    if not _noise_pair_controllable(sys):
        raise ModelAssumptionViolated(
            "(A_n, [sqrt(eps) F_n, -G_n]) is not controllable; the filter is only marginally "
            "stable (use epsilon > 0)")


@dataclass(frozen=True)
class InitialCondition:
    x_bar_0: np.ndarray
    Sigma_0: np.ndarray

    def __post_init__(self):
        x = np.array(self.x_bar_0, dtype=float).ravel()
        S = np.array(self.Sigma_0, dtype=float, ndmin=2)
        if S.shape != (x.size, x.size):
            raise ValueError("Sigma_0 must be square and match x_bar_0")
        object.__setattr__(self, "x_bar_0", x)
        object.__setattr__(self, "Sigma_0", S)


def default_initial_condition(sys, spacing=4.0, cov_scale=1.0):
    """Agents spread on a line along the first axis, ``Sigma_0 = cov_scale * I``."""
    d = sys.spec.d
    mean = np.zeros((sys.n, d))
    mean[:, 0] = spacing * np.arange(1, sys.n + 1)
    return InitialCondition(mean.ravel(), cov_scale * np.eye(sys.state_dim))


@dataclass(frozen=True, eq=False)
class FullInfoController:
    theta: float
    X_n: GareSolution
    K: np.ndarray
    cost_per_agent: float

    @property
    def kind(self):
        return "full_info"


@dataclass(frozen=True, eq=False)
class OutputFeedbackController:
    theta: float
    X_n: GareSolution
    Y_n: GareSolution
    M_inv: np.ndarray
    gain: np.ndarray
    filter_A: np.ndarray
    filter_B: np.ndarray
    filter_L: np.ndarray
    cost_per_agent: float

    @property
    def kind(self):
        return "output_feedback"

    @property
    def state_gain(self):
        """Gain acting on ``x_tilde = M_inv x_hat``: ``n R_n^-1 B_n' X_n``."""
        return self.gain @ la.inv(self.M_inv)


def control_gare_terms(sys, theta):
    """``(A_n, S_n(theta), Q_n / n)`` as dense arrays."""
    n = sys.n
    Rinv = la.inv(sys.spec.R)
    BRB = sys.spec.B @ Rinv @ sys.spec.B.T
    S = n * np.kron(np.eye(n), BRB) - theta * sys.noise_cov.dense
    return sys.A_n.dense, S, sys.Q_n.dense / n


def filter_gare_terms(sys, theta):
    """``(A_n, T_n(theta), W_n + eps Z_n)`` as dense arrays."""
    n = sys.n
    CVC = sys.spec.C.T @ la.solve(sys.spec.V, sys.spec.C)
    T = np.kron(np.eye(n), CVC) - theta * sys.Q_n.dense / n
    return sys.A_n.dense, T, sys.noise_cov.dense


def full_info_cost(sys, X_n):
    """Per-agent cost ``Tr((W_n + eps Z_n) X_n)``."""
    X = X_n.X if isinstance(X_n, GareSolution) else np.asarray(X_n)
    return float(np.sum(sys.noise_cov.dense * X))


def _solve_control(sys, theta):
    A, S, Qc = control_gare_terms(sys, theta)
    return solve_care(A, S, Qc)


def _solve_filter(sys, theta):
    A, T, Wc = filter_gare_terms(sys, theta)
    return solve_filter_care(A, T, Wc)


def _yx_eigenvalues(X, Y):
    # YX is similar to L'YL with X = LL', so its spectrum is real and >= 0
    L = la.cholesky(X, lower=True)
    return la.eigvalsh(L.T @ Y @ L)


def _check_feedback_hurwitz(sys, gain, theta):
    abscissa = float(np.max(la.eigvals(sys.A_n.dense - sys.B_n.dense @ gain).real))
    if abscissa >= 0:
        raise DestabilizingController(
            f"A_n - B_n K has spectral abscissa {abscissa:.3g} >= 0 at theta={theta:g}")


def full_info_synthesis(sys, theta):
    theta = float(theta)
    _check_full_info_assumptions(sys.spec)
    try:
        X = _solve_control(sys, theta)
    except NoSolution as exc:
        raise ThetaAboveCritical(theta, sys.n, str(exc)) from exc
    Rinv = la.inv(sys.spec.R)
    K = sys.n * np.kron(np.eye(sys.n), Rinv @ sys.spec.B.T) @ X.X
    _check_feedback_hurwitz(sys, K, theta)
    return FullInfoController(theta=theta, X_n=X, K=K, cost_per_agent=full_info_cost(sys, X))


def output_feedback_cost(sys, X, Y, theta):
    """``Tr(Y Q_n/n + Y C_n'V_n^-1 C_n Y X (I - theta Y X)^-1)``."""
    X = X.X if isinstance(X, GareSolution) else np.asarray(X)
    Y = Y.X if isinstance(Y, GareSolution) else np.asarray(Y)
    n = sys.n
    CVC = np.kron(np.eye(n), sys.spec.C.T @ la.solve(sys.spec.V, sys.spec.C))
    Minv = la.inv(np.eye(X.shape[0]) - theta * Y @ X)
    return float(np.trace(Y @ sys.Q_n.dense / n + Y @ CVC @ Y @ X @ Minv))


def output_feedback_synthesis(sys, theta, ic=None):
    theta = float(theta)
    _check_output_assumptions(sys)
    try:
        X = _solve_control(sys, theta)
        Y = _solve_filter(sys, theta)
    except NoSolution as exc:
        raise ThetaAboveCritical(theta, sys.n, str(exc)) from exc
    mu = _yx_eigenvalues(X.X, Y.X)
    spectrum = 1.0 - theta * mu
    if spectrum.min() <= 0:
        raise ThetaAboveCritical(theta, sys.n,
                                 f"I - theta Y X has eigenvalue {spectrum.min():.3g} <= 0")
    k = sys.state_dim
    n = sys.n
    M_inv = la.inv(np.eye(k) - theta * Y.X @ X.X)
    Rinv = la.inv(sys.spec.R)
    state_gain = n * np.kron(np.eye(n), Rinv @ sys.spec.B.T) @ X.X
    _check_feedback_hurwitz(sys, state_gain, theta)
    C_n = sys.C_n.dense
    L = Y.X @ C_n.T @ la.inv(sys.V_n.dense)
    filter_A = sys.A_n.dense + theta * Y.X @ sys.Q_n.dense / n - L @ C_n
    if ic is not None:
        gap = la.eigvalsh(Y.X - ic.Sigma_0).min()
        if gap < -1e-12 * max(1.0, la.norm(Y.X, 2)):
            warnings.warn(f"Sigma_0 is not dominated by Y_n (min eigenvalue of Y_n - Sigma_0 is {gap:.3g}); "
                          "the controller is kept but optimality is not guaranteed",
                          SigmaExceedsY, stacklevel=2)
    return OutputFeedbackController(
        theta=theta, X_n=X, Y_n=Y, M_inv=M_inv, gain=state_gain @ M_inv,
        filter_A=filter_A, filter_B=sys.B_n.dense, filter_L=L,
        cost_per_agent=output_feedback_cost(sys, X, Y, theta))


def _bisect(predicate, tol):
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not predicate(0.0):
        raise ModelAssumptionViolated("synthesis fails at theta = 0")
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_MAXITER):
        if not predicate(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise RuntimeError(f"no upper bracket found below theta = {hi:g}")
    for _ in range(BISECTION_MAXITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def theta_star_full(sys, tol=1e-6):
    """Critical risk parameter of the full-information problem, by bisection."""
    _check_full_info_assumptions(sys.spec)

    def feasible(theta):
        return has_pd_stabilizing_solution(*control_gare_terms(sys, theta))

    return _bisect(feasible, tol)


def theta_star_output(sys, tol=1e-6):
    """Critical risk parameter of the output-feedback problem, by bisection."""
    _check_output_assumptions(sys)

    def feasible(theta):
        A, S, Qc = control_gare_terms(sys, theta)
        if not has_pd_stabilizing_solution(A, S, Qc):
            return False
        try:
            Y = _solve_filter(sys, theta)
        except NoSolution:
            return False
        # with X > 0, I - theta Y X has positive spectrum iff X^-1 - theta Y > 0;
        # X^-1 = U1 U2^-1 stays bounded where X itself diverges
        U1, U2 = _stable_basis(A, S, Qc)
        X_inv = la.solve(U2.T, U1.T).T
        return bool(la.eigvalsh(0.5 * (X_inv + X_inv.T) - theta * Y.X).min() > 0)

    return _bisect(feasible, tol)
