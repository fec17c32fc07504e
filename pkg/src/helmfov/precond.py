"""Laplace, multigrid-Laplace and two-level preconditioners with adjoints.

Every preconditioner ``B`` is a :class:`LinearOperator`; the preconditioned
operator used by GMRES and the FOV engine is ``A B`` (right preconditioning).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .assembly import HelmholtzProblem, assemble
from .krylov import LinearOperator, compose
from .multigrid import MgHierarchy, PoissonSolver, build_mg
from .mesh import build_hierarchy
from .sparsela import DenseLU


class PrecondError(ValueError):
    pass


@dataclass(frozen=True)
class PrecondSpec:
    kind: str  # exact_laplace | mg_laplace | two_level
    N: int = 1
    coarse_level: int | None = None
    inner_tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("exact_laplace", "mg_laplace", "two_level"):
            raise PrecondError(f"unknown preconditioner kind {self.kind!r}")
        if self.N < 1:
            raise PrecondError("number of V-cycles must be >= 1")
        if self.kind == "two_level" and (self.coarse_level is None or self.coarse_level < 1):
            raise PrecondError("two-level preconditioner needs a coarse level >= 1")

    @classmethod
    def parse(cls, text: str) -> "PrecondSpec":
        text = text.strip().lower()
        if text in ("laplace", "exact", "exact_laplace"):
            return cls("exact_laplace")
        m = re.fullmatch(r"mg:(\d+)", text)
        if m:
            return cls("mg_laplace", N=int(m.group(1)))
        m = re.fullmatch(r"twolevel:(\d+)", text)
        if m:
            return cls("two_level", coarse_level=int(m.group(1)))
        raise PrecondError(f"cannot parse preconditioner {text!r} "
                           "(expected laplace, mg:N or twolevel:L)")

    def label(self) -> str:
        if self.kind == "exact_laplace":
            return "laplace"
        if self.kind == "mg_laplace":
            return f"mg:{self.N}"
        return f"twolevel:{self.coarse_level}"


class HelmholtzSetup:
    """Fine problem plus the Poisson machinery shared by all preconditioners."""

    def __init__(self, problem: HelmholtzProblem, mg: MgHierarchy | None = None,
                 inner_tol: float = 1e-12, coarsest: int = 1, poisson_method: str = "auto",
                 poisson: PoissonSolver | None = None):
        self.problem = problem
        mesh = problem.mesh
        if mg is None:
            mg = build_mg(build_hierarchy(mesh.dim, min(coarsest, mesh.level), mesh.level))
        if mg.n != problem.n:
            raise PrecondError("multigrid hierarchy does not match the problem size")
        self.mg = mg
        if poisson is None or poisson.mg is not mg:
            poisson = PoissonSolver(mg, tol=inner_tol, method=poisson_method)
        self.poisson = poisson
        self.A = problem.A
        self.AH = problem.A.conj().T.tocsr()
        self.M = problem.M

    @property
    def n(self) -> int:
        return self.problem.n

    def system_operator(self) -> LinearOperator:
        return LinearOperator.from_matrix(self.A, name="A")

    # exact Laplace: K^{-1} M

    def apply_exact_laplace(self, x):
        return self.poisson.solve(self.M @ x)

    def apply_exact_laplace_adjoint(self, x):
        return self.M @ self.poisson.solve(x)

    def exact_laplace(self) -> LinearOperator:
        return LinearOperator(self.n, self.apply_exact_laplace,
                              self.apply_exact_laplace_adjoint, name="K^-1 M")

    # inexact Laplace: K~^{-N} M

    def apply_mg_laplace(self, x, N: int):
        return self.mg.apply_n_cycles(self.M @ x, N)

    def apply_mg_laplace_adjoint(self, x, N: int):
        return self.M @ self.mg.apply_n_cycles(x, N)

    def mg_laplace(self, N: int) -> LinearOperator:
        return LinearOperator(self.n, lambda x: self.apply_mg_laplace(x, N),
                              lambda x: self.apply_mg_laplace_adjoint(x, N),
                              name=f"K~^-{N} M")

    # perturbation A (K~^{-N} - K^{-1}) M

    def apply_perturbation(self, x, N: int):
        Mx = self.M @ x
        return self.A @ (self.mg.apply_n_cycles(Mx, N) - self.poisson.solve(Mx))

    def apply_perturbation_adjoint(self, x, N: int):
        y = self.AH @ x
        return self.M @ (self.mg.apply_n_cycles(y, N) - self.poisson.solve(y))

    def perturbation(self, N: int) -> LinearOperator:
        return LinearOperator(self.n, lambda x: self.apply_perturbation(x, N),
                              lambda x: self.apply_perturbation_adjoint(x, N),
                              name=f"A(K~^-{N} - K^-1)M")

    def mass_sandwich(self, x, N: int) -> complex:
        """x* M (K~^{-N} - K^{-1}) M x; real when the V-cycle is symmetric."""
        Mx = self.M @ x
        return complex(np.vdot(Mx, self.mg.apply_n_cycles(Mx, N) - self.poisson.solve(Mx)))

    def two_level(self, coarse_level: int) -> "TwoLevelOperators":
        return TwoLevelOperators(self, coarse_level)

    def preconditioner(self, spec: PrecondSpec) -> LinearOperator:
        if spec.kind == "exact_laplace":
            return self.exact_laplace()
        if spec.kind == "mg_laplace":
            return self.mg_laplace(spec.N)
        return self.two_level(spec.coarse_level).operator()

    def preconditioned(self, B: LinearOperator) -> LinearOperator:
        return compose(self.system_operator(), B)


class TwoLevelOperators:
    """B2 = R A_H^{-1} R^T M + K^{-1} (I - A R A_H^{-1} R^T) M.

    ``A_H`` is assembled directly on the coarse mesh with the fine loss
    profile; ``R`` is the composite prolongation.
    """

    def __init__(self, setup: HelmholtzSetup, coarse_level: int):
        problem = setup.problem
        fine = problem.mesh.level
        if not 1 <= coarse_level <= fine:
            raise PrecondError(f"coarse level {coarse_level} not in [1, {fine}]")
        hier = setup.mg.mesh
        if coarse_level < hier.coarsest:
            hier = build_hierarchy(problem.mesh.dim, coarse_level, fine)
        h_coarse = hier.level(coarse_level).h
        if not problem.loss.is_aligned(h_coarse):
            raise PrecondError(
                f"loss box {problem.loss.box} is not aligned with the level-{coarse_level} grid")
        self.setup = setup
        self.coarse_level = coarse_level
        self.R = hier.prolongation(coarse_level, fine)
        self.RT = self.R.T.tocsr()
        self.coarse = assemble(hier.level(coarse_level), problem.kappa2, problem.loss)
        self.A_H = self.coarse.A
        self.lu = DenseLU(self.A_H)

    @property
    def n(self) -> int:
        return self.setup.n

    def coarse_solve(self, r):
        """R A_H^{-1} R^T r."""
        return self.R @ self.lu.solve(self.RT @ r)

    def coarse_solve_adjoint(self, r):
        """R A_H^{-*} R^T r."""
        return self.R @ self.lu.solve(self.RT @ r, mode="conj_transpose")

    def apply(self, x):
        s = self.setup
        Mx = s.M @ x
        c = self.coarse_solve(Mx)
        return c + s.poisson.solve(Mx - s.A @ c)

    def apply_adjoint(self, y):
        # B2* = M R A_H^{-*} R^T + M (I - R A_H^{-*} R^T A*) K^{-1}
        s = self.setup
        w = s.poisson.solve(y)
        return s.M @ (self.coarse_solve_adjoint(y) + w - self.coarse_solve_adjoint(s.AH @ w))

    def operator(self) -> LinearOperator:
        return LinearOperator(self.n, self.apply, self.apply_adjoint,
                              name=f"B2[{self.coarse_level}]")

    def q_part(self, x):
        """K^{-1}(I - A R A_H^{-1} R^T) M x, the coefficient vector of Q u."""
        s = self.setup
        Mx = s.M @ x
        return s.poisson.solve(Mx - s.A @ self.coarse_solve(Mx))

    def projection(self, x):
        """Matrix form R A_H^{-*} R^T A* of the a-orthogonal projection."""
        return self.coarse_solve_adjoint(self.setup.AH @ x)

    def galerkin_defect(self) -> float:
        D = (self.RT @ self.setup.A @ self.R - self.A_H).tocsr()
        return float(np.abs(D.data).max(initial=0.0))


def parse_precond(text: str) -> PrecondSpec:
    return PrecondSpec.parse(text)
