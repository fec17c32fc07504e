"""Geometric multigrid V-cycle for the P1 Poisson stiffness matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import mass_matrix, stiffness_matrix
from .krylov import LinearOperator, cg_spd
from .mesh import MeshHierarchy, build_hierarchy
from .sparsela import DenseCholesky

RICHARDSON_SCALE = 2.0 / 3.0


def power_max_eig(K, steps: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue estimate of an SPD matrix (Rayleigh quotient)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[0])
    lam = 0.0
    for _ in range(steps):
        y = K @ x
        lam = float(x @ y / (x @ x))
        x = y / np.linalg.norm(y)
    return lam


@dataclass(eq=False)
class MgHierarchy:
    """Stiffness matrices, prolongations and Richardson weights per level.

    ``K[i]`` belongs to mesh level ``coarsest + i``; ``P[i]`` maps level
    ``coarsest + i`` to ``coarsest + i + 1``.
    """

    mesh: MeshHierarchy
    K: list
    P: list
    PT: list
    omega: list
    coarse_solver: DenseCholesky
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.K[-1].shape[0]

    @property
    def num_levels(self) -> int:
        return len(self.K)

    def _vcycle(self, i, b, x):
        if i == 0:
            return self.coarse_solver.solve(b)
        K, w = self.K[i], self.omega[i]
        x = x + w * (b - K @ x)
        r = self.PT[i - 1] @ (b - K @ x)
        e = self._vcycle(i - 1, r, np.zeros_like(r))
        x = x + self.P[i - 1] @ e
        return x + w * (b - K @ x)

    def vcycle(self, b, x0=None):
        b = np.asarray(b)
        if b.shape != (self.n,):
            raise ValueError(f"rhs of length {b.shape}, hierarchy has {self.n} DOFs")
        dtype = np.result_type(b, float)
        x0 = np.zeros(self.n, dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype)
        return self._vcycle(self.num_levels - 1, b.astype(dtype), x0)

    def apply_n_cycles(self, b, N: int):
        """N V-cycles from a zero guess; a linear, symmetric map of b."""
        if N < 1:
            raise ValueError("need at least one V-cycle")
        x = self.vcycle(b)
        for _ in range(N - 1):
            x = self.vcycle(b, x)
        return x

    def operator(self, N: int = 1) -> LinearOperator:
        """K~^{-N} as a self-adjoint operator."""
        f = lambda x: self.apply_n_cycles(x, N)  # noqa: E731
        return LinearOperator(self.n, f, f, name=f"mg{N}")

    def error_propagation(self, N: int = 1):
        """e -> (K~^{-N} - K^{-1}) K e = -(I - K~^{-N} K) e, as a callable."""
        K = self.K[-1]
        return lambda e: self.apply_n_cycles(K @ e, N) - e


def build_mg(hier: MeshHierarchy, power_steps: int = 30) -> MgHierarchy:
    Ks = [stiffness_matrix(level) for level in hier.levels]
    P = list(hier.prolongations)
    PT = [p.T.tocsr() for p in P]
    omega = [RICHARDSON_SCALE / power_max_eig(K, power_steps) for K in Ks]
    coarse = DenseCholesky(Ks[0])
    meta = {"smoother": "richardson", "omega_scale": RICHARDSON_SCALE,
            "pre_smooth": 1, "post_smooth": 1, "coarse_solver": "dense-cholesky",
            "levels": [hier.coarsest, hier.finest]}
    return MgHierarchy(hier, Ks, P, PT, omega, coarse, meta)


def mg_for(dim: int, level: int, coarsest: int = 1) -> MgHierarchy:
    return build_mg(build_hierarchy(dim, min(coarsest, level), level))


class PoissonSolver:
    """Exact K^{-1}: dense Cholesky for small systems, MG-preconditioned CG otherwise."""

    DENSE_LIMIT = 2000

    def __init__(self, mg: MgHierarchy, tol: float = 1e-12, method: str = "auto",
                 max_iter: int = 500):
        self.mg = mg
        self.K = mg.K[-1]
        self.tol = tol
        self.max_iter = max_iter
        if method == "auto":
            method = "dense" if self.K.shape[0] <= self.DENSE_LIMIT else "pcg"
        if method not in ("dense", "pcg"):
            raise ValueError(f"unknown Poisson solve method {method!r}")
        self.method = method
        self._dense = DenseCholesky(self.K) if method == "dense" else None
        self._prec = mg.operator(1)
        self.cg_iterations = []

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def solve(self, b):
        b = np.asarray(b)
        if self._dense is not None:
            return self._dense.solve(b)
        x, rep = cg_spd(self.K, self._prec, b, tol_rel=self.tol, max_iter=self.max_iter)
        if not rep.converged:
            raise RuntimeError(
                f"inner CG did not reach {self.tol:g} in {self.max_iter} steps "
                f"(residual {rep.final_residual:.3e})")
        self.cg_iterations.append(rep.iterations)
        return x

    def operator(self) -> LinearOperator:
        return LinearOperator(self.n, self.solve, self.solve, name="K^-1")


@dataclass
class ErrorReductionEstimate:
    gamma0: float
    gamma1: float
    levels: tuple
    samples: int


def _norm(W, x):
    return float(np.sqrt(max(np.real(np.vdot(x, W @ x)), 0.0)))


def measure_gamma(mg: MgHierarchy, samples: int = 3, iterations: int = 40,
                  seed: int = 0) -> ErrorReductionEstimate:
    """Per-cycle error reduction of one V-cycle in the K- and M-norms.

    Power iteration on E = (K~^{-1} - K^{-1}) K from random starts; the
    final per-step norm ratio is the estimate, maximised over samples.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    levels = (mg.mesh.coarsest, mg.mesh.finest)
    if mg.num_levels == 1:
        return ErrorReductionEstimate(0.0, 0.0, levels, samples)
    E = mg.error_propagation(1)
    K = mg.K[-1]
    M = mass_matrix(mg.mesh.levels[-1])
    rng = np.random.default_rng(seed)
    gammas = {0: 0.0, 1: 0.0}
    for _ in range(samples):
        for key, W in ((0, M), (1, K)):
            e = rng.standard_normal(mg.n)
            e /= _norm(W, e)
            ratio = 0.0
            for _ in range(iterations):
                f = E(e)
                nf = _norm(W, f)
                ratio = nf
                if nf == 0.0:
                    break
                e = f / nf
            gammas[key] = max(gammas[key], ratio)
    return ErrorReductionEstimate(gammas[0], gammas[1], levels, samples)


def galerkin_defect(mg: MgHierarchy) -> float:
    """max_i || P_i^T K_{i+1} P_i - K_i ||_max over adjacent pairs."""
    worst = 0.0
    for i, P in enumerate(mg.P):
        D = (P.T @ mg.K[i + 1] @ P - mg.K[i]).tocsr()
        worst = max(worst, float(np.abs(D.data).max(initial=0.0)))
    return worst


def smoother_contraction(mg: MgHierarchy) -> list:
    """omega_l * lambda_max(K_l) per level, with lambda_max from sparse eigsh."""
    out = []
    for K, w in zip(mg.K, mg.omega):
        if K.shape[0] <= 2:
            lam = float(np.linalg.eigvalsh(K.toarray()).max())
        else:
            lam = float(spla.eigsh(K, k=1, which="LA", return_eigenvectors=False)[0])
        out.append(w * lam)
    return out
