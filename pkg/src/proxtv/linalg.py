"""Sparse SPD solvers: preconditioned CG and a sparse direct factorization.

Matrices are ``scipy.sparse`` CSR matrices.  The direct solver uses SuperLU
with a symmetric fill-reducing ordering and no off-diagonal pivoting, which
amounts to an LDL^T factorization; a non-positive pivot therefore certifies
that the matrix is not positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveReport",
    "NotPositiveDefiniteError",
    "LinearSolverError",
    "CholeskyFactor",
    "cg_solve",
    "cholesky_solve",
    "spd_solve",
    "DIRECT_SIZE_LIMIT",
]

DIRECT_SIZE_LIMIT = 20_000


class NotPositiveDefiniteError(ValueError):
    pass


class LinearSolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    method: str = "cg"


class CholeskyFactor:
    """Reusable factorization of a sparse SPD matrix."""

    def __init__(self, A, symmetry_tol: float = 1e-14):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        asym = abs(A - A.T)
        scale = max(abs(A).max(), 1.0) if A.nnz else 1.0
        if asym.nnz and asym.max() > symmetry_tol * scale:
            raise NotPositiveDefiniteError("matrix is not symmetric")
        self.shape = A.shape
        if A.shape[0] == 0:
            self._lu = None
            return
        self._lu = spla.splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        pivots = self._lu.U.diagonal()
        if not np.all(pivots > 0.0) or np.any(self._lu.perm_r != self._lu.perm_c):
            raise NotPositiveDefiniteError("non-positive pivot in symmetric factorization")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._lu is None:
            return np.zeros_like(b)
        return self._lu.solve(b)

    __call__ = solve


def cholesky_solve(A, b) -> np.ndarray:
    return CholeskyFactor(A).solve(b)


def _ichol_preconditioner(A, drop_tol: float = 1e-4, fill_factor: float = 10.0):
    """Symmetric incomplete factorization ``M = L D L^T`` applied as ``L^-T D^-1 L^-1``.

    SuperLU's threshold ILU drops entries of L and U independently, so its own
    solve is not symmetric and can break CG.  Only the unit lower factor and
    the pivots are kept, which makes the operator SPD by construction.
    """
    ilu = spla.spilu(sp.csc_matrix(A), drop_tol=drop_tol, fill_factor=fill_factor,
                     permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    n = A.shape[0]
    if np.any(ilu.perm_r != np.arange(n)) or np.any(ilu.perm_c != np.arange(n)):
        raise NotPositiveDefiniteError("incomplete factorization required pivoting")
    d = ilu.U.diagonal()
    if np.any(d <= 0.0):
        raise NotPositiveDefiniteError("non-positive pivot in incomplete factorization")
    lower = sp.csr_matrix(ilu.L)
    upper = sp.csr_matrix(lower.T)

    def apply(r):
        y = spla.spsolve_triangular(lower, r, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(upper, y / d, lower=False, unit_diagonal=True)

    return apply


def cg_solve(
    A,
    b,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-14,
    max_iter: int = 1000,
    preconditioner: str = "jacobi",
    x0=None,
):
    """Preconditioned conjugate gradients.

    Stops once ``||A x - b|| <= max(rel_tol * ||b||, abs_tol)``.  Raises
    :class:`NotPositiveDefiniteError` on non-positive curvature.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    if preconditioner == "identity":
        apply_m = lambda r: r  # noqa: E731
    elif preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0.0):
            raise NotPositiveDefiniteError("non-positive diagonal entry")
        inv_d = 1.0 / d
        apply_m = lambda r: inv_d * r  # noqa: E731
    elif preconditioner == "incomplete-cholesky":
        apply_m = _ichol_preconditioner(A)
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    target = max(rel_tol * bnorm, abs_tol)
    rnorm = np.linalg.norm(r)
    denom = bnorm if bnorm > 0 else 1.0
    if rnorm <= target:
        return x, SolveReport(0, rnorm / denom, True)
    zvec = apply_m(r)
    p = zvec.copy()
    rz = r @ zvec
    for it in range(1, max_iter + 1):
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0.0:
            raise NotPositiveDefiniteError(f"non-positive curvature at CG iteration {it}")
        step = rz / curvature
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, SolveReport(it, rnorm / denom, True)
        zvec = apply_m(r)
        rz_new = r @ zvec
        p = zvec + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(max_iter, rnorm / denom, False)


def spd_solve(A, b, method: str = "auto", **cg_options):
    """Solve an SPD system directly below :data:`DIRECT_SIZE_LIMIT` unknowns, by CG above.

    Returns ``(x, SolveReport)``; raises :class:`LinearSolverError` when CG
    does not converge.
    """
    n = A.shape[0]
    if method == "auto":
        method = "direct" if n < DIRECT_SIZE_LIMIT else "cg"
    if method == "direct":
        x = cholesky_solve(A, b)
        bnorm = np.linalg.norm(b)
        rel = np.linalg.norm(A @ x - b) / (bnorm if bnorm > 0 else 1.0)
        return x, SolveReport(0, float(rel), True, "direct")
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    x, report = cg_solve(A, b, **cg_options)
    if not report.converged:
        raise LinearSolverError("CG did not converge", report)
    return x, report
