"""Kronecker-structured block matrices for n identical pursuers.

Every n-agent matrix in the tracking problem is a short sum of Kronecker
products ``L (x) M`` where the left factor is the identity ``I_n`` or the
all-ones matrix ``E_n``.  :class:`KronSum` keeps those factors and only
builds the dense ``(n d) x (n d)`` array on request.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la

from .errors import NonDiagonalizable, SpecError

__all__ = [
    "kron",
    "ones_matrix",
    "KronSum",
    "SystemSpec",
    "MultiAgentSystem",
    "StructuredSpectrum",
    "basic_spec",
    "assemble",
    "struct_eigs",
]

DIAGONALIZABLE_COND = 1e8


def kron(a, b):
    """Kronecker product of two 2-D arrays."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def ones_matrix(n):
    """``E_n = 1_n 1_n'``."""
    return np.ones((n, n))


def _frozen(a):
    a = np.array(a, dtype=float, ndmin=2)
    a.setflags(write=False)
    return a


class KronSum:
    """Matrix of the form ``sum_k L_k (x) M_k``.

    Instances are immutable; :attr:`dense` is computed once and cached.
    """

    def __init__(self, terms):
        terms = tuple((_frozen(left), _frozen(right)) for left, right in terms)
        if not terms:
            raise ValueError("KronSum needs at least one term")
        shape = (terms[0][0].shape[0] * terms[0][1].shape[0],
                 terms[0][0].shape[1] * terms[0][1].shape[1])
        for left, right in terms:
            if (left.shape[0] * right.shape[0], left.shape[1] * right.shape[1]) != shape:
                raise ValueError("inconsistent term shapes in KronSum")
        self.terms = terms
        self.shape = shape

    @classmethod
    def identity_blocks(cls, n, block):
        return cls([(np.eye(n), block)])

    @classmethod
    def ones_blocks(cls, n, block):
        return cls([(ones_matrix(n), block)])

    @cached_property
    def dense(self):
        out = sum(kron(left, right) for left, right in self.terms)
        out.setflags(write=False)
        return out

    def trace(self):
        return float(sum(np.trace(left) * np.trace(right) for left, right in self.terms))

    @property
    def T(self):
        return KronSum([(left.T, right.T) for left, right in self.terms])

    def __add__(self, other):
        if not isinstance(other, KronSum):
            return NotImplemented
        return KronSum(self.terms + other.terms)

    def __mul__(self, scalar):
        return KronSum([(left, scalar * right) for left, right in self.terms])

    __rmul__ = __mul__

    def __matmul__(self, other):
        # mixed-product rule, term by term
        if not isinstance(other, KronSum):
            return NotImplemented
        return KronSum([(l1 @ l2, r1 @ r2) for l1, r1 in self.terms for l2, r2 in other.terms])

    def __array__(self, dtype=None, copy=None):
        return np.array(self.dense, dtype=dtype)

    def __repr__(self):
        return f"KronSum(shape={self.shape}, terms={len(self.terms)})"


def _check_square(name, a, d):
    if a.shape != (d, d):
        raise SpecError(name, f"expected shape {(d, d)}, got {a.shape}")


def _is_symmetric(a, tol=1e-12):
    return np.allclose(a, a.T, atol=tol * max(1.0, np.abs(a).max()))


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Single pursuer / evader model.

    Dynamics of one relative state ``x_i = x_{p,i} - x_e``::

        dx_i = (A x_i + B u_i) dt + sqrt(epsilon) F dw_{p,i} - G dw_e
        y_i  = C x_i + H v_i

    with running cost ``x_i' Q x_i + u_i' R u_i``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    epsilon: float = 0.0
    W: np.ndarray = field(init=False, repr=False)
    Z: np.ndarray = field(init=False, repr=False)
    V: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("A", "B", "C", "F", "G", "H", "Q", "R"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        d = self.A.shape[0]
        _check_square("A", self.A, d)
        _check_square("F", self.F, d)
        _check_square("G", self.G, d)
        _check_square("Q", self.Q, d)
        if self.B.shape[0] != d:
            raise SpecError("B", f"expected {d} rows, got {self.B.shape[0]}")
        m = self.B.shape[1]
        _check_square("R", self.R, m)
        if self.C.shape[1] != d:
            raise SpecError("C", f"expected {d} columns, got {self.C.shape[1]}")
        p = self.C.shape[0]
        _check_square("H", self.H, p)
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise SpecError("epsilon", "must be a finite number >= 0")
        object.__setattr__(self, "epsilon", float(self.epsilon))

        if not _is_symmetric(self.R) or la.eigvalsh(self.R).min() <= 0:
            raise SpecError("R", "must be symmetric positive definite")
        if not _is_symmetric(self.Q) or la.eigvalsh(self.Q).min() < -1e-12 * max(1.0, la.norm(self.Q, 2)):
            raise SpecError("Q", "must be symmetric positive semidefinite")
        V = self.H @ self.H.T
        if la.eigvalsh(V).min() <= 1e-14 * max(1.0, la.norm(V, 2)):
            raise SpecError("H", "V = H H' must be positive definite")
        object.__setattr__(self, "W", _frozen(self.G @ self.G.T))
        object.__setattr__(self, "Z", _frozen(self.F @ self.F.T))
        object.__setattr__(self, "V", _frozen(V))

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def with_epsilon(self, epsilon):
        return self.replace(epsilon=epsilon)

    def replace(self, **changes):
        kwargs = {k: getattr(self, k) for k in ("A", "B", "C", "F", "G", "H", "Q", "R", "epsilon")}
        kwargs.update(changes)
        return SystemSpec(**kwargs)


def basic_spec(d=1, epsilon=0.0):
    """Integrator pursuers chasing a Brownian evader (``A = 0``, all other blocks ``I_d``)."""
    eye = np.eye(d)
    return SystemSpec(A=np.zeros((d, d)), B=eye, C=eye, F=eye, G=eye, H=eye, Q=eye, R=eye,
                      epsilon=epsilon)


@dataclass(frozen=True, eq=False)
class MultiAgentSystem:
    """The n-agent aggregate of a :class:`SystemSpec`.

    ``G_n = 1_n (x) G`` is kept dense (it is not square); everything else is
    a :class:`KronSum`.
    """

    spec: SystemSpec
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"agent count must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    def _diag(self, block):
        return KronSum.identity_blocks(self.n, block)

    @cached_property
    def A_n(self):
        return self._diag(self.spec.A)

    @cached_property
    def B_n(self):
        return self._diag(self.spec.B)

    @cached_property
    def C_n(self):
        return self._diag(self.spec.C)

    @cached_property
    def F_n(self):
        return self._diag(self.spec.F)

    @cached_property
    def H_n(self):
        return self._diag(self.spec.H)

    @cached_property
    def Z_n(self):
        return self._diag(self.spec.Z)

    @cached_property
    def V_n(self):
        return self._diag(self.spec.V)

    @cached_property
    def Q_n(self):
        return self._diag(self.spec.Q)

    @cached_property
    def R_n(self):
        return self._diag(self.spec.R)

    @cached_property
    def W_n(self):
        return KronSum.ones_blocks(self.n, self.spec.W)

    @cached_property
    def E_n(self):
        return ones_matrix(self.n)

    @cached_property
    def G_n(self):
        g = kron(np.ones((self.n, 1)), self.spec.G)
        g.setflags(write=False)
        return g

    @cached_property
    def noise_cov(self):
        """``W_n + epsilon Z_n``, the intensity of the relative-state noise."""
        return self.W_n + self.spec.epsilon * self.Z_n

    @property
    def epsilon(self):
        return self.spec.epsilon

    @property
    def state_dim(self):
        return self.n * self.spec.d

    @property
    def input_dim(self):
        return self.n * self.spec.m

    @property
    def output_dim(self):
        return self.n * self.spec.p


def assemble(spec, n):
    """Build the n-agent system for ``spec``; ``n`` must be at least 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return MultiAgentSystem(spec, n)


@dataclass(frozen=True, eq=False)
class StructuredSpectrum:
    bulk_eigenvalues: np.ndarray
    coupled_eigenvalues: np.ndarray
    n: int

    def all(self):
        return np.concatenate([self.bulk_eigenvalues, self.coupled_eigenvalues])


def _eig_checked(a, name):
    w, v = la.eig(a)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond >= DIAGONALIZABLE_COND:
        raise NonDiagonalizable(f"{name} is not numerically diagonalizable (eigenvector cond {cond:.3g})")
    return w


def _real_if_close(w):
    return np.real_if_close(w, tol=1000)


def struct_eigs(M, N, n):
    """Spectrum of ``I_n (x) M + (E_n / n) (x) N`` from two d x d eigenproblems.

    The eigenvalues of ``M`` appear with multiplicity ``n - 1`` (eigenvectors
    ``y (x) w`` with ``y`` orthogonal to ``1_n``) and those of ``M + N`` once
    (eigenvectors ``1_n (x) v``).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    if n < 1:
        raise ValueError("n must be >= 1")
    coupled = _real_if_close(_eig_checked(M + N, "M + N"))
    if n == 1:
        bulk = np.empty(0, dtype=coupled.dtype)
    else:
        bulk = np.tile(_real_if_close(_eig_checked(M, "M")), n - 1)
    return StructuredSpectrum(bulk_eigenvalues=bulk, coupled_eigenvalues=coupled, n=n)
