"""Complex sparse and small dense kernels.

CSR storage is scipy's ``csr_matrix`` in canonical form (sorted, no
duplicate column indices); dense factorizations wrap LAPACK through scipy.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class DimensionError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def as_csr(matrix) -> sp.csr_matrix:
    A = sp.csr_matrix(matrix)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_canonical_csr(A: sp.csr_matrix) -> bool:
    ptr, idx = A.indptr, A.indices
    if ptr[0] != 0 or np.any(np.diff(ptr) < 0) or ptr[-1] != A.nnz:
        return False
    for i in range(A.shape[0]):
        if np.any(np.diff(idx[ptr[i]:ptr[i + 1]]) <= 0):
            return False
    return True


def _check(A, x, cols):
    if x.shape[0] != cols:
        raise DimensionError(f"operand of length {x.shape[0]}, matrix expects {cols}")


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x)
    _check(A, x, A.shape[1])
    return A @ x


def spmv_conj_transpose(A, x) -> np.ndarray:
    x = np.asarray(x)
    _check(A, x, A.shape[0])
    return A.conj().T @ x


class DenseLU:
    """Partial-pivoting LU of a dense complex matrix.

    ``solve(b, mode="conj_transpose")`` applies the inverse of A^*.
    """

    _TRANS = {"normal": 0, "transpose": 1, "conj_transpose": 2}

    def __init__(self, matrix):
        A = np.asarray(matrix.toarray() if sp.issparse(matrix) else matrix)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"LU needs a square matrix, got shape {A.shape}")
        self.n = A.shape[0]
        self.dtype = np.result_type(A, float)
        self.norm_max = float(np.abs(A).max()) if A.size else 0.0
        with warnings.catch_warnings():
            # singularity is reported below with our own exception
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(A.astype(self.dtype), check_finite=True)
        pivots = np.abs(np.diag(lu))
        if self.n and pivots.min() <= np.finfo(float).eps * self.n * max(self.norm_max, 1e-300):
            raise SingularMatrixError(
                f"matrix is singular to working precision (min pivot {pivots.min():.3e})"
            )
        self.lu, self.piv = lu, piv

    def solve(self, b, mode: str = "normal") -> np.ndarray:
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise DimensionError(f"rhs of length {b.shape[0]}, factor has {self.n}")
        dtype = np.result_type(self.dtype, b)
        lu = self.lu if self.lu.dtype == dtype else self.lu.astype(dtype)
        return sla.lu_solve((lu, self.piv), b.astype(dtype), trans=self._TRANS[mode])


def lu_factor(matrix) -> DenseLU:
    return DenseLU(matrix)


def lu_solve(factor: DenseLU, b, mode: str = "normal") -> np.ndarray:
    return factor.solve(b, mode)


class DenseCholesky:
    """Cholesky factor of a real SPD matrix; accepts complex right-hand sides."""

    def __init__(self, matrix):
        A = np.asarray(matrix.toarray() if sp.issparse(matrix) else matrix, dtype=float)
        self.n = A.shape[0]
        self.factor = sla.cho_factor(A, lower=True)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b)
        if np.iscomplexobj(b) and b.ndim == 1:
            x = sla.cho_solve(self.factor, np.column_stack([b.real, b.imag]), check_finite=False)
            return x[:, 0] + 1j * x[:, 1]
        return sla.cho_solve(self.factor, b, check_finite=False)


def hermitian_part(A) -> np.ndarray:
    A = np.asarray(A)
    return 0.5 * (A + A.conj().T)


def dense_eig_hermitian(A, tol: float = 1e-12) -> np.ndarray:
    A = np.asarray(A.toarray() if sp.issparse(A) else A)
    scale = max(np.abs(A).max(), 1.0) if A.size else 1.0
    if np.abs(A - A.conj().T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigvalsh(hermitian_part(A))


def write_matrixmarket(matrix, path) -> None:
    """Coordinate complex general format, 1-based, row-major entry order."""
    A = as_csr(matrix).astype(complex)
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate complex general\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(rows, A.indices, A.data):
            fh.write(f"{i + 1} {j + 1} {float(v.real)!r} {float(v.imag)!r}\n")


def read_matrixmarket(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "%%MatrixMarket" or header[2] != "coordinate":
            raise ValueError(f"{path}: not a coordinate MatrixMarket file")
        field, symmetry = header[3], header[4]
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nrows, ncols, nnz = (int(v) for v in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 4))
    i = data[:, 0].astype(np.int64) - 1
    j = data[:, 1].astype(np.int64) - 1
    if field == "complex":
        v = data[:, 2] + 1j * data[:, 3]
    elif field in ("real", "integer"):
        v = data[:, 2].astype(complex)
    else:
        raise ValueError(f"unsupported MatrixMarket field {field!r}")
    if symmetry in ("symmetric", "hermitian"):
        off = i != j
        i, j = np.concatenate([i, j[off]]), np.concatenate([j, i[off]])
        v = np.concatenate([v, v[off].conj() if symmetry == "hermitian" else v[off]])
    return as_csr(sp.coo_matrix((v, (i, j)), shape=(nrows, ncols)))
