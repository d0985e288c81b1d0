"""Sparse linear solvers with a uniform report.

The default path is Jacobi-preconditioned BiCGStab; restarted GMRES is
available for tougher nonsymmetric systems, and a dense LU factorization
serves as a small-system fallback and cross-check. All methods are
deterministic: the same matrix and right-hand side produce bit-identical
solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lu_factor, lu_solve

DENSE_LIMIT = 5000


@dataclass(frozen=True)
class SolveReport:
    method: str
    converged: bool
    iterations: int
    residual: float              # relative to |rhs|
    dim: int


class SolverError(RuntimeError):
    """Iterative solve failed; carries the report of the attempt."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def _relative_residual(A, b, x, bnorm):
    if bnorm == 0.0:
        return 0.0
    return float(np.linalg.norm(b - A @ x) / bnorm)


def solve(A, b, method: str = "bicgstab", tol: float = 1e-10,
          max_iter: int | None = None, x0=None):
    """Solve A x = b. Returns (x, SolveReport); raises SolverError.

    Convergence means the scipy stopping test |r| <= tol * |b| was met.
    max_iter defaults to 20 * dim.
    """
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    if method == "dense":
        return dense_lu(A, b)
    if method not in ("bicgstab", "gmres"):
        raise ValueError(f"unknown solver {method!r}")
    bnorm = float(np.linalg.norm(b))
    if n == 0 or bnorm == 0.0:
        report = SolveReport(method=method, converged=True, iterations=0,
                             residual=0.0, dim=n)
        return np.zeros(n), report
    if max_iter is None:
        max_iter = 20 * n

    diag = A.diagonal().copy()
    diag[diag == 0.0] = 1.0
    M = sp.diags(1.0 / diag)

    count = [0]

    def tick(_):
        count[0] += 1

    if method == "bicgstab":
        x, info = spla.bicgstab(A, b, x0=x0, rtol=tol, atol=0.0, M=M,
                                maxiter=max_iter, callback=tick)
    else:
        x, info = spla.gmres(A, b, x0=x0, rtol=tol, atol=0.0, M=M,
                             restart=30, maxiter=max_iter, callback=tick,
                             callback_type="pr_norm")
    res = _relative_residual(A, b, x, bnorm)
    report = SolveReport(method=method, converged=(info == 0),
                         iterations=count[0], residual=res, dim=n)
    if info != 0:
        raise SolverError(
            f"{method} did not converge (info={info}, "
            f"relative residual {res:.3e})", report)
    return x, report


def dense_lu(A, b):
    """LU solve after densifying; guarded to small systems."""
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(
            f"dense solve limited to dimension {DENSE_LIMIT}, got {n}")
    b = np.asarray(b, dtype=float)
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    x = lu_solve(lu_factor(dense), b) if n else np.zeros(0)
    bnorm = float(np.linalg.norm(b)) if n else 0.0
    res = _relative_residual(dense, b, x, bnorm) if n else 0.0
    report = SolveReport(method="dense", converged=True, iterations=0,
                         residual=res, dim=n)
    return x, report
