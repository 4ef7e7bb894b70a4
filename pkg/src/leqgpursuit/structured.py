"""Closed-form n-agent solutions that only require d x d Riccati solves.

For identical agents the n-agent equations inherit ``I_n`` / ``E_n``
structure, so

* risk-neutral control: ``X_n = (1/n) I_n (x) X1``;
* risk-sensitive control with ``eps = 0``:
  ``X_n = (1/n) I_n (x) X~1 + (1/n^2) E_n (x) X^1`` where ``X~1`` is the
  single-agent LQG solution and ``X~1 + X^1`` the single-agent
  risk-sensitive one;
* filter with ``A = 0`` as ``eps -> 0``: ``Y_n -> (E_n / sqrt(n)) (x) Y~``
  where ``Y~ (C'V^-1C - (theta/n) Q) Y~ = W + eps Z``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

from .errors import AssumptionViolated, EpsilonNotZero, NoSolution, ThetaAboveCritical
from .kron import KronSum, assemble, ones_matrix, struct_eigs
from .riccati import solve_care
from .synthesis import _check_full_info_assumptions, theta_star_full

__all__ = [
    "StructuredControlSolution",
    "StructuredFilterSolution",
    "lqg_structured_X",
    "rs_structured_X",
    "rs_structured_filter_Y",
    "spectral_radius_condition",
    "spectral_radius",
    "asymptotic_lqg_cost",
    "structured_output_cost",
    "theta_I_star_asymptotic",
    "sqrt_riccati",
]


@dataclass(frozen=True, eq=False)
class StructuredControlSolution:
    X_tilde_1: np.ndarray
    X_hat_1: np.ndarray
    n: int
    cost_per_agent: float

    @property
    def X_1(self):
        """Single-agent solution at the same ``theta``."""
        return self.X_tilde_1 + self.X_hat_1

    @cached_property
    def X_n(self):
        n = self.n
        return KronSum([(np.eye(n), self.X_tilde_1 / n), (ones_matrix(n), self.X_hat_1 / n**2)])

    def eigenvalues(self):
        # I_n (x) X~/n + (E_n/n) (x) X^/n
        return struct_eigs(self.X_tilde_1 / self.n, self.X_hat_1 / self.n, self.n)


@dataclass(frozen=True, eq=False)
class StructuredFilterSolution:
    Y_tilde_1n: np.ndarray
    n: int
    theta: float

    @cached_property
    def Y_n(self):
        return KronSum([(ones_matrix(self.n) / np.sqrt(self.n), self.Y_tilde_1n)])


def _sym(a):
    return 0.5 * (a + a.T)


def _psd_sqrt(a):
    w, v = la.eigh(_sym(a))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def sqrt_riccati(T, W):
    """Positive definite solution of ``Y T Y = W`` for ``T`` positive definite.

    ``Y = T^-1/2 (T^1/2 W T^1/2)^1/2 T^-1/2``.
    """
    T = _sym(np.atleast_2d(np.asarray(T, dtype=float)))
    W = _sym(np.atleast_2d(np.asarray(W, dtype=float)))
    w, v = la.eigh(T)
    if w.min() <= 0:
        raise ThetaAboveCritical(float("nan"), 0, "middle matrix of Y T Y = W is not positive definite")
    t_half = (v * np.sqrt(w)) @ v.T
    t_mhalf = (v / np.sqrt(w)) @ v.T
    return _sym(t_mhalf @ _psd_sqrt(t_half @ W @ t_half) @ t_mhalf)


def _single_control(spec, theta):
    BRB = spec.B @ la.solve(spec.R, spec.B.T)
    return solve_care(spec.A, BRB - theta * spec.W, spec.Q).X


def lqg_structured_X(spec, n):
    _check_full_info_assumptions(spec)
    X1 = _single_control(spec, 0.0)
    cost = float(np.sum((spec.W + spec.epsilon * spec.Z) * X1))
    return StructuredControlSolution(X_tilde_1=X1, X_hat_1=np.zeros_like(X1), n=n, cost_per_agent=cost)


def rs_structured_X(spec, n, theta):
    """Risk-sensitive full-information solution for ``eps = 0``."""
    if spec.epsilon != 0:
        raise EpsilonNotZero(f"closed form requires epsilon = 0, got {spec.epsilon:g}")
    _check_full_info_assumptions(spec)
    X_tilde = _single_control(spec, 0.0)
    try:
        X1 = _single_control(spec, theta)
    except NoSolution as exc:
        raise ThetaAboveCritical(theta, n, str(exc)) from exc
    cost = float(np.sum(spec.W * X1))
    return StructuredControlSolution(X_tilde_1=X_tilde, X_hat_1=X1 - X_tilde, n=n, cost_per_agent=cost)


def _require_zero_drift(spec):
    if np.any(spec.A != 0):
        raise AssumptionViolated("closed form requires A = 0")


def _cvc(spec):
    return spec.C.T @ la.solve(spec.V, spec.C)


def rs_structured_filter_Y(spec, n, theta):
    _require_zero_drift(spec)
    T = _cvc(spec) - (theta / n) * spec.Q
    try:
        Y = sqrt_riccati(T, spec.W + spec.epsilon * spec.Z)
    except ThetaAboveCritical as exc:
        raise ThetaAboveCritical(theta, n, "C'V^-1C - (theta/n) Q is not positive definite") from exc
    return StructuredFilterSolution(Y_tilde_1n=Y, n=n, theta=float(theta))


def spectral_radius(M):
    return float(np.max(np.abs(la.eigvals(np.atleast_2d(M)))))


def spectral_radius_condition(Y_tilde, X_1, theta, n):
    """``rho(theta Y~ X1) < sqrt(n)``."""
    return spectral_radius(theta * np.atleast_2d(Y_tilde) @ np.atleast_2d(X_1)) < np.sqrt(n)


def asymptotic_lqg_cost(spec, n):
    """``Tr(Y1 Q) / sqrt(n) + Tr(W X1)`` for ``A = 0``."""
    _require_zero_drift(spec)
    Y1 = sqrt_riccati(_cvc(spec), spec.W + spec.epsilon * spec.Z)
    X1 = _single_control(spec, 0.0)
    return float(np.trace(Y1 @ spec.Q) / np.sqrt(n) + np.sum(spec.W * X1))


def structured_output_cost(spec, n, theta):
    """Output-feedback cost per agent from the ``eps -> 0`` structured forms.

    With ``Y_n X_n = (E_n / n^{3/2}) (x) Y~ X1`` the trace formula collapses to
    ``Tr(Y~ Q)/sqrt(n) + Tr(Y~ K Y~ X1 (I - theta Y~ X1 / sqrt(n))^-1)`` with
    ``K = C'V^-1 C``.
    """
    _require_zero_drift(spec)
    X1 = rs_structured_X(spec.with_epsilon(0.0), n, theta).X_1
    Yt = rs_structured_filter_Y(spec, n, theta).Y_tilde_1n
    P = theta * Yt @ X1 / np.sqrt(n)
    lam = la.eigvals(np.eye(spec.d) - P).real
    if lam.min() <= 0:
        raise ThetaAboveCritical(theta, n, "rho(theta Y~ X1) >= sqrt(n)")
    K = _cvc(spec)
    core = Yt @ K @ Yt @ X1 @ la.inv(np.eye(spec.d) - P)
    return float(np.trace(Yt @ spec.Q) / np.sqrt(n) + np.trace(core))


def theta_I_star_asymptotic(spec, n, xtol=1e-12):
    """Root of ``rho(theta Y~_{1,n}(theta) X1(theta)) = sqrt(n)`` for ``A = 0``."""
    _require_zero_drift(spec)
    spec0 = spec.with_epsilon(0.0)
    limit_control = theta_star_full(assemble(spec0, 1), tol=1e-10)
    K = _cvc(spec)
    # Y~ exists while K - (theta/n) Q > 0
    qk = la.eigvalsh(spec.Q, K).max()
    limit_filter = n / qk if qk > 0 else np.inf
    hi = min(limit_control, limit_filter) * (1 - 1e-9)

    def gap(theta):
        X1 = _single_control(spec0, theta)
        Yt = sqrt_riccati(K - (theta / n) * spec.Q, spec.W + spec.epsilon * spec.Z)
        return spectral_radius(theta * Yt @ X1) - np.sqrt(n)

    return brentq(gap, 0.0, hi, xtol=xtol)
