"""Continuous-time algebraic Riccati equations with indefinite quadratic term.

Solves ``A'X + XA - X S X + Qc = 0`` where ``S`` may be sign-indefinite, as
happens in the risk-sensitive problem once ``theta > 0``.  The stabilizing
solution is taken from the stable invariant subspace of the Hamiltonian
``[[A, -S], [-Qc, -A']]`` (ordered real Schur form) and then polished with a
few Newton steps.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import IllConditioned, NoSolution

__all__ = [
    "GareSolution",
    "solve_care",
    "solve_filter_care",
    "stabilizing_solution",
    "has_pd_stabilizing_solution",
    "is_stabilizing",
    "spectral_abscissa",
    "care_residual",
]

IMAG_AXIS_TOL = 1e-8
PD_TOL = 1e-10
RESIDUAL_RTOL = 1e-9
SUBSPACE_COND_MAX = 1e12
NEWTON_MAXITER = 30


@dataclass(frozen=True, eq=False)
class GareSolution:
    X: np.ndarray
    residual_norm: float
    min_eigenvalue: float
    closed_loop_spectral_abscissa: float


def _as2d(a):
    return np.array(a, dtype=float, ndmin=2)


def care_residual(A, S, Qc, X):
    return A.T @ X + X @ A - X @ S @ X + Qc


def spectral_abscissa(M):
    return float(np.max(la.eigvals(M).real))


def is_stabilizing(A, S, X):
    """True iff ``A - S X`` is Hurwitz."""
    A, S, X = _as2d(A), _as2d(S), _as2d(X)
    return spectral_abscissa(A - S @ X) < 0


def _sym(X):
    return 0.5 * (X + X.T)


def _newton(A, S, Qc, X):
    """Newton-Kleinman refinement; returns the iterate with smallest residual."""
    best = X
    best_res = la.norm(care_residual(A, S, Qc, X), "fro")
    for _ in range(NEWTON_MAXITER):
        if best_res <= 1e-3 * RESIDUAL_RTOL * max(1.0, la.norm(best, "fro")):
            break
        Ak = A - S @ best
        if spectral_abscissa(Ak) >= 0:
            break
        # Ak' X+ + X+ Ak = -(Xk S Xk + Qc)
        with warnings.catch_warnings():
            # scipy perturbs near-singular Lyapunov problems; such a step is not trusted
            warnings.simplefilter("error", RuntimeWarning)
            try:
                X_new = _sym(la.solve_continuous_lyapunov(Ak.T, -(best @ S @ best + Qc)))
            except (la.LinAlgError, ValueError, RuntimeWarning):
                break
        res = la.norm(care_residual(A, S, Qc, X_new), "fro")
        if not np.isfinite(res) or res >= best_res:
            break
        best, best_res = X_new, res
    return best, best_res


def _stable_basis(A, S, Qc):
    """Orthonormal basis ``[U1; U2]`` of the stable Hamiltonian subspace."""
    k = A.shape[0]
    if A.shape != (k, k) or S.shape != (k, k) or Qc.shape != (k, k):
        raise ValueError("A, S and Qc must be square and of equal size")
    S, Qc = _sym(S), _sym(Qc)
    Ham = np.block([[A, -S], [-Qc, -A.T]])
    eigs = la.eigvals(Ham)
    scale = max(1.0, la.norm(Ham, 2))
    if np.min(np.abs(eigs.real)) <= IMAG_AXIS_TOL * scale:
        raise NoSolution("Hamiltonian has eigenvalues on the imaginary axis")
    _, Z, sdim = la.schur(Ham, output="real", sort="lhp")
    if sdim != k:
        raise NoSolution(f"stable subspace has dimension {sdim}, expected {k}")
    return Z[:k, :k], Z[k:, :k]


def has_pd_stabilizing_solution(A, S, Qc):
    """Existence test for a stabilizing ``X > 0`` that never forms ``X``.

    ``X = U2 U1^-1`` is congruent to ``U1' U2``, which stays well scaled even
    where ``X`` itself diverges (typically right at the critical ``theta``).
    """
    A, S, Qc = _as2d(A), _as2d(S), _as2d(Qc)
    try:
        U1, U2 = _stable_basis(A, S, Qc)
    except NoSolution:
        return False
    if np.linalg.cond(U1) > 1.0 / np.finfo(float).eps:
        return False
    lam = la.eigvalsh(_sym(U1.T @ U2))
    return bool(lam.min() > PD_TOL * max(abs(lam).max(), np.finfo(float).tiny))


def stabilizing_solution(A, S, Qc, refine=True):
    """Stabilizing symmetric solution, without any definiteness requirement.

    Returns ``(X, residual_norm)``.  Raises :class:`NoSolution` when the
    Hamiltonian has eigenvalues on (or within tolerance of) the imaginary
    axis and :class:`IllConditioned` when the stable subspace cannot be
    turned into a graph ``X = U2 U1^{-1}`` reliably.
    """
    A, S, Qc = _as2d(A), _as2d(S), _as2d(Qc)
    U1, U2 = _stable_basis(A, S, Qc)
    S, Qc = _sym(S), _sym(Qc)
    cond = np.linalg.cond(U1)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        # the stable subspace is not a graph: no stabilizing solution exists
        raise NoSolution("stable subspace is not complementary to the state axis")
    if cond > SUBSPACE_COND_MAX:
        raise IllConditioned(f"stable subspace basis has condition number {cond:.3g}")
    X = _sym(la.solve(U1.T, U2.T).T)
    if refine:
        X, res = _newton(A, S, Qc, X)
    else:
        res = la.norm(care_residual(A, S, Qc, X), "fro")
    return X, float(res)


def solve_care(A, S, Qc):
    """Stabilizing positive definite solution of ``A'X + XA - XSX + Qc = 0``.

    Raises :class:`NoSolution` if no such solution exists (for the
    risk-sensitive problem: ``theta`` at or above its critical value).
    """
    A, S, Qc = _as2d(A), _as2d(S), _as2d(Qc)
    X, res = stabilizing_solution(A, S, Qc)
    xnorm = la.norm(X, "fro")
    if res > RESIDUAL_RTOL * max(1.0, xnorm):
        raise IllConditioned(f"Riccati residual {res:.3g} above tolerance after refinement")
    lam_min = float(la.eigvalsh(X).min())
    if lam_min <= PD_TOL * la.norm(X, 2):
        raise NoSolution(f"stabilizing solution is not positive definite (min eigenvalue {lam_min:.3g})")
    abscissa = spectral_abscissa(A - _sym(S) @ X)
    if abscissa >= 0:
        raise NoSolution("candidate solution is not stabilizing")
    return GareSolution(X=X, residual_norm=res, min_eigenvalue=lam_min,
                        closed_loop_spectral_abscissa=abscissa)


def solve_filter_care(A, T, Wc):
    """Solve the filter equation ``Y A' + A Y - Y T Y + Wc = 0`` by duality.

    The stabilizing solution (``A - Y T`` Hurwitz) is returned.
    """
    return solve_care(_as2d(A).T, T, Wc)
