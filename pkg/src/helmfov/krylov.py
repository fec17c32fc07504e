"""Krylov solvers: right-preconditioned full GMRES, PCG and Lanczos."""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp


class NotSPDError(ArithmeticError):
    """Raised by CG when it meets non-positive curvature."""


class LinearOperator:
    """Implicit operator with optional adjoint.

    >>> op = LinearOperator.from_matrix(np.eye(2))
    >>> op @ np.ones(2)
    array([1., 1.])
    """

    def __init__(self, n, apply, apply_adjoint=None, name=""):
        self.n = int(n)
        self._apply = apply
        self._apply_adjoint = apply_adjoint
        self.name = name

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def has_adjoint(self) -> bool:
        return self._apply_adjoint is not None

    def apply(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"operator of size {self.n} applied to length {x.shape[0]}")
        return self._apply(x)

    def apply_adjoint(self, x):
        if self._apply_adjoint is None:
            raise NotImplementedError(f"operator {self.name!r} has no adjoint")
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"operator of size {self.n} applied to length {x.shape[0]}")
        return self._apply_adjoint(x)

    __call__ = apply

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return compose(self, other)
        return self.apply(other)

    def adjoint(self) -> "LinearOperator":
        return LinearOperator(self.n, self.apply_adjoint, self.apply, name=f"({self.name})*")

    def scaled(self, alpha: complex) -> "LinearOperator":
        alpha = complex(alpha)
        adj = None
        if self.has_adjoint:
            adj = lambda x: np.conj(alpha) * self.apply_adjoint(x)  # noqa: E731
        return LinearOperator(self.n, lambda x: alpha * self.apply(x), adj,
                              name=f"{alpha}*{self.name}")

    def hermitian_part(self, theta: float = 0.0) -> "LinearOperator":
        """x -> (e^{i theta} B x + e^{-i theta} B* x) / 2."""
        rot = np.exp(1j * theta)

        def apply(x):
            return 0.5 * (rot * self.apply(x) + np.conj(rot) * self.apply_adjoint(x))

        return LinearOperator(self.n, apply, apply, name=f"H({self.name}, {theta:.4g})")

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.n, dtype=complex)
        return np.column_stack([self.apply(e) for e in eye])

    @classmethod
    def from_matrix(cls, A, name="matrix") -> "LinearOperator":
        if sp.issparse(A):
            AH = A.conj().T.tocsr()
        else:
            A = np.asarray(A)
            AH = A.conj().T
        return cls(A.shape[0], lambda x: A @ x, lambda x: AH @ x, name=name)

    @classmethod
    def identity(cls, n) -> "LinearOperator":
        return cls(n, lambda x: np.array(x, copy=True), lambda x: np.array(x, copy=True),
                   name="I")


def compose(A: LinearOperator, B: LinearOperator) -> LinearOperator:
    """The product A B; its adjoint is B* A*."""
    if A.n != B.n:
        raise ValueError("operator sizes differ")
    adj = None
    if A.has_adjoint and B.has_adjoint:
        adj = lambda y: B.apply_adjoint(A.apply_adjoint(y))  # noqa: E731
    return LinearOperator(A.n, lambda x: A.apply(B.apply(x)), adj, name=f"{A.name}.{B.name}")


def as_operator(A) -> LinearOperator:
    if A is None or isinstance(A, LinearOperator):
        return A
    if callable(A) and not hasattr(A, "shape"):
        raise TypeError("wrap callables in LinearOperator to give them a size")
    return LinearOperator.from_matrix(A)


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    true_final_residual: float
    converged: bool
    wall_time: float
    params: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def csv_header(self) -> list:
        return sorted(self.params) + ["iterations", "converged", "final_residual",
                                      "true_final_residual"]

    def csv_row(self) -> list:
        return [self.params[k] for k in sorted(self.params)] + [
            self.iterations, int(self.converged), self.final_residual,
            self.true_final_residual]

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=float)


def _givens(a: complex, b: complex):
    """c, s with [[c, s], [-conj(s), c]] @ [a, b] = [r, 0], c real."""
    if b == 0:
        return 1.0, 0.0, a
    if a == 0:
        return 0.0, 1.0, b
    denom = np.hypot(abs(a), abs(b))
    phase = a / abs(a)
    c = abs(a) / denom
    s = phase * np.conj(b) / denom
    return c, s, phase * denom


def gmres_right(A, B, b, tol_rel: float = 1e-6, max_iter: int = 200,
                callback=None, params=None):
    """Full GMRES on A B y = b from a zero guess; returns x = B y.

    Arnoldi uses modified Gram-Schmidt with one reorthogonalization pass;
    the least-squares problem is updated with Givens rotations.  The
    recorded residuals are those of the original system because the
    preconditioner sits on the right.
    """
    A = as_operator(A)
    B = LinearOperator.identity(A.n) if B is None else as_operator(B)
    b = np.asarray(b, dtype=complex)
    t0 = time.perf_counter()
    n = A.n
    beta = np.linalg.norm(b)
    history = [float(beta)]
    if beta == 0.0:
        return np.zeros(n, dtype=complex), SolveReport(
            0, history, 0.0, True, time.perf_counter() - t0, dict(params or {}))

    m = min(max_iter, n)
    V = np.zeros((m + 1, n), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    cs = np.zeros(m)
    sn = np.zeros(m, dtype=complex)
    g = np.zeros(m + 1, dtype=complex)
    g[0] = beta
    V[0] = b / beta
    target = tol_rel * beta
    k = 0
    converged = False
    while k < m:
        w = A.apply(B.apply(V[k]))
        for _ in range(2):
            for j in range(k + 1):
                hj = np.vdot(V[j], w)
                H[j, k] += hj
                w = w - hj * V[j]
        h_next = np.linalg.norm(w)
        H[k + 1, k] = h_next
        for j in range(k):
            hj, hj1 = H[j, k], H[j + 1, k]
            H[j, k] = cs[j] * hj + sn[j] * hj1
            H[j + 1, k] = -np.conj(sn[j]) * hj + cs[j] * hj1
        cs[k], sn[k], H[k, k] = _givens(H[k, k], H[k + 1, k])
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        res = abs(g[k])
        # rounding can make the recurrence residual tick up by an ulp
        history.append(float(min(res, history[-1])))
        if callback is not None:
            callback(k, res)
        breakdown = h_next <= 1e-14 * np.abs(H[: k, k - 1]).max(initial=1.0)
        if res <= target or breakdown:
            converged = res <= target or breakdown
            break
        V[k] = w / h_next

    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
    x = B.apply(V[:k].T @ y) if k else np.zeros(n, dtype=complex)
    true_res = float(np.linalg.norm(b - A.apply(x)))
    report = SolveReport(k, history, true_res, bool(converged),
                         time.perf_counter() - t0, dict(params or {}))
    return x, report


def cg_spd(K, M_prec, b, tol_rel: float = 1e-12, max_iter: int = 1000, params=None):
    """Preconditioned conjugate gradients for a real SPD K.

    ``M_prec`` approximates K^{-1} (operator, matrix, callable-on-vector via
    LinearOperator) or is None.  Complex right-hand sides are fine since
    K is Hermitian.
    """
    K = as_operator(K)
    P = as_operator(M_prec) if M_prec is not None else None
    b = np.asarray(b)
    dtype = np.result_type(b, float)
    t0 = time.perf_counter()
    x = np.zeros(K.n, dtype=dtype)
    r = b.astype(dtype)
    bnorm = np.linalg.norm(b)
    history = [float(bnorm)]
    if bnorm == 0:
        return x, SolveReport(0, history, 0.0, True, time.perf_counter() - t0, dict(params or {}))
    z = P.apply(r) if P is not None else r.copy()
    p = z.copy()
    rz = np.vdot(r, z).real
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Kp = K.apply(p)
        curv = np.vdot(p, Kp).real
        if curv <= 0:
            raise NotSPDError(f"non-positive curvature {curv:.3e} at CG step {it}")
        alpha = rz / curv
        x = x + alpha * p
        r = r - alpha * Kp
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if rnorm <= tol_rel * bnorm:
            converged = True
            break
        z = P.apply(r) if P is not None else r.copy()
        rz_new = np.vdot(r, z).real
        if rz_new <= 0:
            raise NotSPDError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = float(np.linalg.norm(b - K.apply(x)))
    return x, SolveReport(it, history, true_res, converged,
                          time.perf_counter() - t0, dict(params or {}))


@dataclass
class RitzPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def __iter__(self):
        # unpack as (lambda_max, eigenvector)
        return iter((self.value, self.vector))


def lanczos_max_eig(H, tol: float = 1e-10, max_iter: int | None = None, v0=None,
                    seed: int = 0) -> RitzPair:
    """Largest eigenvalue of a Hermitian operator by Lanczos.

    Full reorthogonalization (two passes) keeps the basis orthonormal, so the
    iteration is exact once the Krylov space is invariant.  Stops when the
    Ritz residual drops below ``tol * max(1, |theta|)``.
    """
    H = as_operator(H)
    n = H.n
    max_iter = n if max_iter is None else min(max_iter, n)
    if v0 is None:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q = np.asarray(v0, dtype=complex)
    q = q / np.linalg.norm(q)
    Q = np.zeros((max_iter + 1, n), dtype=complex)
    Q[0] = q
    alpha = np.zeros(max_iter)
    beta = np.zeros(max_iter)
    history = []
    theta, s, resid = 0.0, np.ones(1), np.inf
    k = 0
    while k < max_iter:
        w = H.apply(Q[k])
        alpha[k] = np.vdot(Q[k], w).real
        w = w - alpha[k] * Q[k] - (beta[k - 1] * Q[k - 1] if k else 0.0)
        for _ in range(2):
            w = w - Q[: k + 1].T @ (Q[: k + 1].conj() @ w)
        beta[k] = np.linalg.norm(w)
        k += 1
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        vals, vecs = np.linalg.eigh(T)
        theta, s = vals[-1], vecs[:, -1]
        history.append(float(theta))
        resid = beta[k - 1] * abs(s[-1])
        tnorm = np.abs(vals).max()
        if resid <= tol * max(1.0, abs(theta)) or beta[k - 1] <= 1e-14 * max(tnorm, 1e-300):
            break
        Q[k] = w / beta[k - 1]
    vec = Q[:k].T @ s
    vec /= np.linalg.norm(vec)
    true_resid = float(np.linalg.norm(H.apply(vec) - theta * vec))
    converged = true_resid <= 10 * tol * max(1.0, abs(theta), np.abs(history).max())
    if not converged:
        warnings.warn(f"Lanczos stopped after {k} steps with residual {true_resid:.2e}",
                      RuntimeWarning, stacklevel=2)
    return RitzPair(float(theta), vec, true_resid, k, converged, history)
