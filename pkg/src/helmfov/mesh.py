"""Uniform simplicial meshes of the unit square/cube and their nested hierarchies.

Level ``l`` has ``n = 2**l`` cells per axis.  Every cell is split into
``d!`` simplices by the Kuhn (Freudenthal) rule, i.e. along the main
diagonal, so that a uniformly refined mesh is a refinement of the coarse
one and the P1 spaces are nested.  Only interior nodes carry degrees of
freedom.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_DOFS = 10**7


class MeshError(ValueError):
    pass


def _check_args(dim, level, max_dofs):
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim!r}")
    if int(level) != level or level < 1:
        raise MeshError(f"level must be a positive integer, got {level!r}")
    # guard before 2**level is used to size anything
    if level * dim > 62 or (2**level - 1) ** dim > max_dofs:
        raise MeshError(
            f"level {level} in {dim}D exceeds the DOF cap of {max_dofs}"
        )


@dataclass(frozen=True, eq=False)
class MeshLevel:
    """One uniform mesh level.

    ``nodes`` holds all grid nodes (boundary included) in lexicographic
    coordinate order, ``elements`` indexes into ``nodes`` and ``dof_map``
    sends a node to its interior DOF number or -1 on the boundary.
    """

    dim: int
    level: int
    nodes: np.ndarray
    elements: np.ndarray
    dof_map: np.ndarray
    interior: np.ndarray

    @property
    def n(self) -> int:
        return 2**self.level

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_dofs(self) -> int:
        return len(self.interior)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[self.interior]

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        p = self.nodes[self.elements]
        jac = p[:, 1:, :] - p[:, :1, :]
        return np.linalg.det(jac) / math.factorial(self.dim)

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "level": self.level,
            "h": self.h,
            "dofs": self.num_dofs,
            "elements": self.num_elements,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary())

    def grid_index(self, ijk) -> np.ndarray:
        """Linear node index of integer grid coordinates (..., dim)."""
        ijk = np.asarray(ijk)
        shape = (self.n + 1,) * self.dim
        return np.ravel_multi_index(tuple(np.moveaxis(ijk, -1, 0)), shape)

    def locate(self, points):
        """Kuhn-simplex vertices and barycentric weights for each point.

        Returns ``(vertices, weights)`` with shapes ``(m, d+1)``.  Points on
        shared faces get a valid (non-unique) host simplex.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = self.n, self.dim
        scaled = pts * n
        cell = np.clip(np.floor(scaled).astype(np.int64), 0, n - 1)
        t = scaled - cell
        order = np.argsort(-t, axis=1, kind="stable")
        ts = np.take_along_axis(t, order, axis=1)
        weights = np.empty((len(pts), d + 1))
        weights[:, 0] = 1.0 - ts[:, 0]
        weights[:, 1:d] = ts[:, : d - 1] - ts[:, 1:]
        weights[:, d] = ts[:, d - 1]
        corners = np.repeat(cell[:, None, :], d + 1, axis=1)
        rows = np.arange(len(pts))
        for k in range(d):
            corners[:, k + 1 :, :][rows, :, order[:, k]] += 1
        return self.grid_index(corners), weights

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Evaluate the FE function with interior coefficients ``coeffs``."""
        full = np.zeros(len(self.nodes), dtype=np.result_type(coeffs, float))
        full[self.interior] = coeffs
        verts, w = self.locate(points)
        return np.sum(full[verts] * w, axis=1)


def _kuhn_template(dim):
    simplices = []
    for perm in itertools.permutations(range(dim)):
        corner = np.zeros(dim, dtype=np.int64)
        verts = [corner.copy()]
        for axis in perm:
            corner[axis] += 1
            verts.append(corner.copy())
        simplices.append(verts)
    return np.array(simplices)  # (d!, d+1, d)


def build_mesh(dim: int, level: int, max_dofs: int = DEFAULT_MAX_DOFS) -> MeshLevel:
    _check_args(dim, level, max_dofs)
    n = 2**level
    shape = (n + 1,) * dim
    grid = np.indices(shape).reshape(dim, -1).T  # lexicographic, first axis slowest
    nodes = grid / n

    cells = np.indices((n,) * dim).reshape(dim, -1).T
    template = _kuhn_template(dim)
    corners = cells[:, None, None, :] + template[None, :, :, :]
    elements = np.ravel_multi_index(
        tuple(np.moveaxis(corners, -1, 0)), shape
    ).reshape(-1, dim + 1)

    # positive orientation: swap two trailing vertices where needed
    p = nodes[elements]
    neg = np.linalg.det(p[:, 1:, :] - p[:, :1, :]) < 0
    elements[neg, 1], elements[neg, 2] = elements[neg, 2].copy(), elements[neg, 1].copy()

    on_boundary = np.any((grid == 0) | (grid == n), axis=1)
    interior = np.flatnonzero(~on_boundary)
    dof_map = np.full(len(nodes), -1, dtype=np.int64)
    dof_map[interior] = np.arange(len(interior))
    return MeshLevel(dim, level, nodes, elements, dof_map, interior)


def prolongation_matrix(coarse: MeshLevel, fine: MeshLevel) -> sp.csr_matrix:
    """Interpolation of coarse P1 functions at the fine interior nodes.

    Fine nodes either coincide with a coarse node or sit at the midpoint of
    a coarse edge whose direction lies in {0,1}^d (always a Kuhn edge).
    """
    if fine.dim != coarse.dim or fine.level != coarse.level + 1:
        raise MeshError("prolongation needs adjacent levels of equal dimension")
    fine_ijk = np.indices((fine.n + 1,) * fine.dim).reshape(fine.dim, -1).T
    fine_ijk = fine_ijk[fine.interior]
    lo = fine_ijk // 2
    hi = lo + (fine_ijk % 2)

    rows, cols = [], []
    # coincident nodes get 0.5 twice, summed below
    for ends in (lo, hi):
        c = coarse.dof_map[coarse.grid_index(ends)]
        keep = c >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(c[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    R = sp.coo_matrix(
        (np.full(len(rows), 0.5), (rows, cols)),
        shape=(fine.num_dofs, coarse.num_dofs),
    ).tocsr()
    R.sum_duplicates()
    R.sort_indices()
    return R


@dataclass(eq=False)
class MeshHierarchy:
    """Nested levels ``coarsest..finest``; prolongations between neighbours."""

    levels: list
    prolongations: list
    _composite: dict = field(default_factory=dict, repr=False)

    @property
    def coarsest(self) -> int:
        return self.levels[0].level

    @property
    def finest(self) -> int:
        return self.levels[-1].level

    @property
    def dim(self) -> int:
        return self.levels[0].dim

    def level(self, ell: int) -> MeshLevel:
        if not self.coarsest <= ell <= self.finest:
            raise MeshError(f"level {ell} outside hierarchy [{self.coarsest}, {self.finest}]")
        return self.levels[ell - self.coarsest]

    def prolongation(self, from_level: int, to_level: int) -> sp.csr_matrix:
        if from_level > to_level:
            raise MeshError("prolongation goes from coarse to fine")
        self.level(from_level), self.level(to_level)
        key = (from_level, to_level)
        if key not in self._composite:
            P = sp.identity(self.level(from_level).num_dofs, format="csr")
            for ell in range(from_level, to_level):
                P = self.prolongations[ell - self.coarsest] @ P
            self._composite[key] = P.tocsr()
        return self._composite[key]


def build_hierarchy(dim: int, coarsest: int, finest: int,
                    max_dofs: int = DEFAULT_MAX_DOFS) -> MeshHierarchy:
    if not 1 <= coarsest <= finest:
        raise MeshError("need 1 <= coarsest <= finest")
    _check_args(dim, finest, max_dofs)
    levels = [build_mesh(dim, ell, max_dofs) for ell in range(coarsest, finest + 1)]
    prolongations = [prolongation_matrix(c, f) for c, f in zip(levels, levels[1:])]
    return MeshHierarchy(levels, prolongations)


def prolongate(hier: MeshHierarchy, from_level: int, to_level: int, x) -> np.ndarray:
    x = np.asarray(x)
    coarse = hier.level(from_level)
    if x.shape != (coarse.num_dofs,):
        raise MeshError(
            f"vector of length {x.shape} does not match {coarse.num_dofs} DOFs"
        )
    if from_level == to_level:
        return x.copy()
    return hier.prolongation(from_level, to_level) @ x
