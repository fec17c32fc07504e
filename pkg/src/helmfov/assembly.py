"""P1 finite element matrices for the lossy Helmholtz problem.

All element matrices are exact (no quadrature error): stiffness from
gradient outer products, mass from the standard P1 template.  Boundary
nodes are eliminated, so every matrix acts on interior DOFs only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import MeshLevel


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class LossProfile:
    """Absorption coefficient sigma: a constant, or ``value`` inside a box."""

    kind: str = "constant"
    value: float = 1.0
    box: tuple | None = None  # ((x0, y0[, z0]), (x1, y1[, z1]))

    def __post_init__(self):
        if self.kind not in ("constant", "box"):
            raise AssemblyError(f"unknown loss kind {self.kind!r}")
        if self.value < 0:
            raise AssemblyError("sigma must be non-negative")
        if self.kind == "box":
            if self.box is None:
                raise AssemblyError("box loss needs a box")
            lo, hi = (np.asarray(c, dtype=float) for c in self.box)
            if lo.shape != hi.shape or np.any(hi <= lo):
                raise AssemblyError(f"degenerate loss box {self.box!r}")
            if self.value <= 0:
                raise AssemblyError("loss inside a box must be positive")

    @classmethod
    def constant(cls, sigma: float) -> "LossProfile":
        return cls("constant", float(sigma))

    @classmethod
    def in_box(cls, lo, hi, sigma_m: float) -> "LossProfile":
        return cls("box", float(sigma_m), (tuple(map(float, lo)), tuple(map(float, hi))))

    @property
    def sup(self) -> float:
        return self.value

    def check_domain(self, dim: int):
        if self.kind != "box":
            return
        lo, hi = (np.asarray(c) for c in self.box)
        if len(lo) != dim:
            raise AssemblyError(f"loss box has dimension {len(lo)}, mesh has {dim}")
        if np.any(hi <= 0) or np.any(lo >= 1):
            raise AssemblyError("loss box does not intersect the unit domain")

    def is_aligned(self, h: float) -> bool:
        """True when sigma is piecewise constant on every mesh of size <= h."""
        if self.kind == "constant":
            return True
        corners = np.clip(np.concatenate(self.box), 0.0, 1.0) / h
        return bool(np.allclose(corners, np.round(corners), atol=1e-12))

    def at(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == "constant":
            return np.full(len(points), self.value)
        lo, hi = (np.asarray(c) for c in self.box)
        inside = np.all((points > lo) & (points < hi), axis=1)
        return np.where(inside, self.value, 0.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "value": self.value}
        if self.box is not None:
            d["box"] = [list(self.box[0]), list(self.box[1])]
        return d

    @classmethod
    def parse(cls, text: str) -> "LossProfile":
        """Parse ``1.5`` or ``x0,y0:x1,y1:value`` (box form)."""
        parts = text.split(":")
        if len(parts) == 1:
            return cls.constant(float(parts[0]))
        if len(parts) != 3:
            raise AssemblyError(f"cannot parse loss spec {text!r}")
        lo = [float(v) for v in parts[0].split(",")]
        hi = [float(v) for v in parts[1].split(",")]
        return cls.in_box(lo, hi, float(parts[2]))


def element_gradients(mesh: MeshLevel):
    """Barycentric gradients (ne, d+1, d) and element volumes (ne,)."""
    p = mesh.nodes[mesh.elements]
    jac = p[:, 1:, :] - p[:, :1, :]
    inv = np.linalg.inv(jac)  # rows of inv^T are gradients of lambda_1..d
    g = np.empty((len(p), mesh.dim + 1, mesh.dim))
    g[:, 1:, :] = np.transpose(inv, (0, 2, 1))
    g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
    vol = np.abs(np.linalg.det(jac)) / math.factorial(mesh.dim)
    return g, vol


def _mass_template(dim):
    t = np.ones((dim + 1, dim + 1)) + np.eye(dim + 1)
    return t / ((dim + 1) * (dim + 2))


def _global(mesh: MeshLevel, local: np.ndarray) -> sp.csr_matrix:
    """Sum element matrices (ne, d+1, d+1) into the interior-DOF matrix."""
    dofs = mesh.dof_map[mesh.elements]
    k = mesh.dim + 1
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.num_dofs
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def stiffness_matrix(mesh: MeshLevel) -> sp.csr_matrix:
    g, vol = element_gradients(mesh)
    return _global(mesh, np.einsum("eid,ejd->eij", g, g) * vol[:, None, None])


def mass_matrix(mesh: MeshLevel, weights=None) -> sp.csr_matrix:
    _, vol = element_gradients(mesh)
    if weights is not None:
        vol = vol * weights
    return _global(mesh, vol[:, None, None] * _mass_template(mesh.dim)[None])


def element_centroids(mesh: MeshLevel) -> np.ndarray:
    return mesh.nodes[mesh.elements].mean(axis=1)


@dataclass(eq=False)
class HelmholtzProblem:
    mesh: MeshLevel
    kappa2: float
    loss: LossProfile
    K: sp.csr_matrix
    M: sp.csr_matrix
    M_sigma: sp.csr_matrix
    A: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def params(self) -> dict:
        return {
            "mesh": self.mesh.summary(),
            "kappa2": self.kappa2,
            "loss": self.loss.to_dict(),
        }

    def params_json(self) -> str:
        return json.dumps(self.params(), sort_keys=True)


def assemble(mesh: MeshLevel, kappa2: float, loss: LossProfile) -> HelmholtzProblem:
    if kappa2 < 0:
        raise AssemblyError("kappa^2 must be non-negative")
    loss.check_domain(mesh.dim)
    K = stiffness_matrix(mesh)
    M = mass_matrix(mesh)
    if loss.kind == "constant":
        M_sigma = (loss.value * M).tocsr()
    else:
        M_sigma = mass_matrix(mesh, loss.at(element_centroids(mesh)))
    # same sparsity pattern for all three, so the sum is entrywise
    A = (K.astype(complex) - kappa2 * M + 1j * M_sigma).tocsr()
    A.sort_indices()
    return HelmholtzProblem(mesh, float(kappa2), loss, K, M, M_sigma, A)


def assemble_load_constant(mesh: MeshLevel, f_value: complex = 1.0) -> np.ndarray:
    """Load vector of a constant source: f * integral of each hat function."""
    _, vol = element_gradients(mesh)
    share = np.repeat(vol / (mesh.dim + 1), mesh.dim + 1)
    dofs = mesh.dof_map[mesh.elements].ravel()
    keep = dofs >= 0
    b = np.bincount(dofs[keep], weights=share[keep], minlength=mesh.num_dofs)
    return complex(f_value) * b.astype(complex)
