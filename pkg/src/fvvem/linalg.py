"""Sparse matrices and the restarted GMRES solver used for all implicit systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SolverError(Exception):
    """Arnoldi breakdown or other unrecoverable solver failure."""


DEFAULT_TOL = 1e-12     # iterative-solve stopping tolerance (relative residual)


@dataclass
class SolverReport:
    iterations: int
    residual: float          # final relative residual ||b - A x|| / ||b||
    converged: bool


class SparseMatrix:
    """Square-or-rectangular CSR matrix; finalized on construction.

    Column indices are sorted and unique per row and explicit zeros are
    dropped, so the structure is canonical.
    """

    def __init__(self, csr: sp.csr_matrix):
        csr = csr.tocsr().copy()
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        self._m = csr

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr())

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(sp.identity(n, format="csr"))

    @property
    def shape(self):
        return self._m.shape

    @property
    def indptr(self):
        return self._m.indptr

    @property
    def indices(self):
        return self._m.indices

    @property
    def data(self):
        return self._m.data

    @property
    def nnz(self):
        return self._m.nnz

    def diagonal(self):
        return self._m.diagonal()

    def to_scipy(self) -> sp.csr_matrix:
        return self._m

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self._m.T.tocsr())

    def is_structurally_symmetric(self) -> bool:
        d = (self._m != 0) - (self._m.T != 0)
        return d.nnz == 0

    def symmetry_error(self) -> float:
        d = self._m - self._m.T
        return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())

    def combine(self, coeff_self: float, other: "SparseMatrix", coeff_other: float) -> "SparseMatrix":
        return SparseMatrix((coeff_self * self._m + coeff_other * other._m).tocsr())


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A @ x with an explicit dimension check."""
    x = np.asarray(x)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has {x.shape[0]} rows")
    return A.to_scipy() @ x


def gmres_solve(A: SparseMatrix, b: np.ndarray, x0: np.ndarray | None = None,
                tol: float = DEFAULT_TOL, restart: int = 50, maxiter: int = 10_000,
                jacobi: bool = False) -> tuple[np.ndarray, SolverReport]:
    """Restarted GMRES(m) with modified Gram-Schmidt.

    Stops when ||b - A x||_2 / ||b||_2 <= tol; returns x0 immediately when it
    already satisfies the tolerance.  Optional Jacobi (diagonal) right
    preconditioning; the reported residual is always the unpreconditioned one.
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("gmres requires a square matrix")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != n:
        raise ValueError("right-hand side length mismatch")
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    Asp = A.to_scipy()
    dinv = None
    if jacobi:
        d = A.diagonal()
        if np.any(d == 0.0):
            raise SolverError("Jacobi preconditioning requires a nonzero diagonal")
        dinv = 1.0 / d

    r = b - Asp @ x
    beta = float(np.linalg.norm(r))
    if beta / nb <= tol:
        return x, SolverReport(0, beta / nb, True)

    total_it = 0
    V = np.empty((restart + 1, n))
    H = np.zeros((restart + 1, restart))
    while total_it < maxiter:
        V[0] = r / beta
        g = np.zeros(restart + 1)
        g[0] = beta
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        j = 0
        while j < restart and total_it < maxiter:
            w = V[j] * dinv if dinv is not None else V[j]
            w = Asp @ w
            # classical Gram-Schmidt with one re-orthogonalization (CGS2):
            # numerically on par with MGS but fully vectorized
            coeffs = V[:j + 1] @ w
            w -= V[:j + 1].T @ coeffs
            corr = V[:j + 1] @ w
            w -= V[:j + 1].T @ corr
            H[:j + 1, j] = coeffs + corr
            hnext = float(np.linalg.norm(w))
            H[j + 1, j] = hnext
            total_it += 1
            if hnext <= 1e-32 * beta:
                if abs(g[j]) > 10.0 * tol * nb and not _solvable(H, g, j):
                    raise SolverError("Arnoldi breakdown: basis norm underflow")
                j += 1
                break
            V[j + 1] = w / hnext
            # Givens rotations keep the residual norm available cheaply
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j += 1
            if abs(g[j]) / nb <= 0.9 * tol:
                break
        y = np.linalg.solve(np.triu(H[:j, :j]), g[:j]) if j else np.zeros(0)
        dx = V[:j].T @ y
        if dinv is not None:
            dx *= dinv
        x = x + dx
        r = b - Asp @ x
        beta = float(np.linalg.norm(r))
        if beta / nb <= tol:
            return x, SolverReport(total_it, beta / nb, True)
        H[:] = 0.0
    return x, SolverReport(total_it, beta / nb, False)


def _solvable(H, g, j) -> bool:
    """Lucky-breakdown check: the reduced system still yields the residual."""
    try:
        np.linalg.solve(np.triu(H[:j + 1, :j + 1]), g[:j + 1])
        return True
    except np.linalg.LinAlgError:
        return False


def apply_dirichlet(A: SparseMatrix, b: np.ndarray, dofs: np.ndarray,
                    values: np.ndarray) -> tuple[SparseMatrix, np.ndarray]:
    """Constrain dofs to values: identity rows plus symmetric column elimination.

    Coupled columns are folded into b so a symmetric A stays symmetric.
    Raises on duplicate indices with conflicting values.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if len(dofs) != len(values):
        raise ValueError("dofs and values length mismatch")
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if len(dofs) == 0:
        return A, b
    order = np.argsort(dofs, kind="stable")
    ds, vs = dofs[order], values[order]
    dup = ds[1:] == ds[:-1]
    if np.any(dup):
        if np.any(np.abs(vs[1:][dup] - vs[:-1][dup]) > 0.0):
            bad = ds[1:][dup][np.abs(vs[1:][dup] - vs[:-1][dup]) > 0.0]
            raise ValueError(f"conflicting Dirichlet values at dofs {np.unique(bad)[:5]}")
        keep = np.concatenate([[True], ~dup])
        ds, vs = ds[keep], vs[keep]
    xfix = np.zeros(n)
    xfix[ds] = vs
    mask = np.zeros(n, dtype=bool)
    mask[ds] = True

    M = A.to_scipy().tocsr(copy=True)
    b -= M @ xfix                     # move known values to the rhs
    b[ds] = vs
    # zero constrained rows and columns, then place unit diagonals
    keep_rows = ~mask[_csr_row_of(M)]
    keep_cols = ~mask[M.indices]
    M.data[~(keep_rows & keep_cols)] = 0.0
    M = M.tocsr()
    M += sp.coo_matrix((np.ones(len(ds)), (ds, ds)), shape=M.shape).tocsr()
    return SparseMatrix(M), b


def _csr_row_of(M: sp.csr_matrix) -> np.ndarray:
    counts = np.diff(M.indptr)
    return np.repeat(np.arange(M.shape[0]), counts)
