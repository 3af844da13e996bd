"""Sparse linear algebra kernels: CSR helpers, preconditioned CG, FGMRES.

Storage and matrix-vector products delegate to scipy.sparse CSR; the Krylov
iterations are implemented here because the solver needs a flexible (right-
preconditioned, per-iteration-varying) GMRES with true-residual stopping and
inner-work accounting, which scipy does not provide.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

_SPLU_OPTS = dict(permc_spec="NATURAL", diag_pivot_thresh=0.0)


@dataclass
class SolverReport:
    """Iteration record of one Krylov solve.

    ``residuals`` are relative residual norms, entry 0 being 1.0 (or 0.0 for
    a zero right-hand side).  ``inner`` accumulates inner-solve iteration
    totals per preconditioner block.  ``wall_time`` is kept out of
    ``to_json`` so serialized outputs are reproducible byte for byte.
    """

    iterations: int
    residuals: list[float]
    converged: bool
    inner: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "converged": bool(self.converged),
            "inner": {k: int(v) for k, v in sorted(self.inner.items())},
            "warnings": list(self.warnings),
        }


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: sorted indices, summed duplicates."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def validate_csr(A: sp.csr_matrix) -> None:
    """Check the structural CSR invariants (monotone indptr, sorted columns)."""
    if not sp.isspmatrix_csr(A):
        raise TypeError("expected a CSR matrix")
    if A.indptr[0] != 0 or A.indptr[-1] != A.nnz:
        raise ValueError("corrupt indptr")
    if np.any(np.diff(A.indptr) < 0):
        raise ValueError("indptr not monotone")
    if not A.has_sorted_indices:
        raise ValueError("column indices not sorted")
    if A.nnz and (A.indices.min() < 0 or A.indices.max() >= A.shape[1]):
        raise ValueError("column index out of range")


def spmv(A, x: np.ndarray) -> np.ndarray:
    return A @ x


def jacobi_preconditioner(A) -> Callable[[np.ndarray], np.ndarray]:
    d = np.asarray(A.diagonal())
    if np.any(d <= 0.0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    dinv = 1.0 / d
    return lambda r: dinv * r


def sgs_preconditioner(A) -> Callable[[np.ndarray], np.ndarray]:
    """Symmetric Gauss-Seidel: z = (D+U)^-1 D (D+L)^-1 r.

    The triangular sweeps run through SuperLU factorizations of the two
    triangular parts (natural ordering, no pivoting), which is markedly
    faster than generic triangular solves at the sizes used here.
    """
    A = as_csr(A)
    d = np.asarray(A.diagonal())
    if np.any(d <= 0.0):
        raise ValueError("SGS preconditioner needs a positive diagonal")
    lower = splu(sp.tril(A, 0).tocsc(), **_SPLU_OPTS)
    upper = splu(sp.triu(A, 0).tocsc(), **_SPLU_OPTS)

    def apply(r: np.ndarray) -> np.ndarray:
        y = lower.solve(r)
        return upper.solve(d * y)

    return apply


def _resolve_preconditioner(A, preconditioner):
    if preconditioner is None:
        return lambda r: r
    if callable(preconditioner):
        return preconditioner
    if preconditioner == "jacobi":
        return jacobi_preconditioner(A)
    if preconditioner == "sgs":
        return sgs_preconditioner(A)
    raise ValueError(f"unknown preconditioner {preconditioner!r}")


def cg_solve(
    A,
    b: np.ndarray,
    preconditioner=None,
    rel_tol: float = 1e-10,
    max_iter: int = 1000,
) -> tuple[np.ndarray, SolverReport]:
    """Preconditioned conjugate gradients from a zero initial guess.

    Stops when the residual satisfies ||b - A x|| <= rel_tol ||b||; the
    recursively updated residual is confirmed against the true one before
    declaring convergence.  Non-finite values raise FloatingPointError.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    M = _resolve_preconditioner(A, preconditioner)
    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        return np.zeros_like(b), SolverReport(0, [0.0], True, wall_time=time.perf_counter() - t0)
    x = np.zeros_like(b)
    r = b.copy()
    z = M(r)
    p = z.copy()
    rho = float(r @ z)
    hist = [1.0]
    tol = rel_tol * normb
    for k in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp == 0.0:
            raise FloatingPointError("CG breakdown: non-finite or zero curvature")
        alpha = rho / pAp
        x += alpha * p
        r -= alpha * Ap
        rn = float(np.linalg.norm(r))
        if not np.isfinite(rn):
            raise FloatingPointError("CG produced a non-finite residual")
        hist.append(rn / normb)
        if rn <= tol:
            true_rn = float(np.linalg.norm(b - A @ x))
            hist[-1] = true_rn / normb
            if true_rn <= tol:
                return x, SolverReport(k, hist, True, wall_time=time.perf_counter() - t0)
        z = M(r)
        rho_new = float(r @ z)
        if not np.isfinite(rho_new):
            raise FloatingPointError("CG produced a non-finite inner product")
        p = z + (rho_new / rho) * p
        rho = rho_new
    return x, SolverReport(max_iter, hist, False, wall_time=time.perf_counter() - t0)


def fgmres_solve(
    op,
    b: np.ndarray,
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None,
    rel_tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[np.ndarray, SolverReport]:
    """Flexible right-preconditioned GMRES, zero initial guess, no restart.

    The preconditioner may change from iteration to iteration (inexact inner
    solves); the per-iteration preconditioned directions are stored.  The
    Givens residual estimate triggers an explicit true-residual check before
    convergence is declared, and the iteration continues if the estimate was
    optimistic.  A happy breakdown returns the exact Krylov solution.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    matvec = op if callable(op) else (lambda v, _A=op: _A @ v)
    M = preconditioner if preconditioner is not None else (lambda r: r)
    n = b.size
    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        return np.zeros_like(b), SolverReport(0, [0.0], True, wall_time=time.perf_counter() - t0)

    V = [b / normb]
    Z: list[np.ndarray] = []
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = normb
    hist = [1.0]

    def solution(k: int) -> np.ndarray:
        # back-substitute the k x k triangular system, combine stored directions
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1 : k] @ y[i + 1 : k]) / H[i, i]
        x = np.zeros(n)
        for i in range(k):
            x += y[i] * Z[i]
        return x

    for k in range(max_iter):
        z = M(V[k])
        Z.append(z)
        w = matvec(z)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("FGMRES operator produced non-finite values")
        norm_w0 = float(np.linalg.norm(w))
        for i in range(k + 1):
            H[i, k] = V[i] @ w
            w -= H[i, k] * V[i]
        # one reorthogonalization pass when the lost mass is significant
        corr = np.array([V[i] @ w for i in range(k + 1)])
        if np.linalg.norm(corr) > 1e-8 * norm_w0:
            for i in range(k + 1):
                w -= corr[i] * V[i]
                H[i, k] += corr[i]
        hkk = float(np.linalg.norm(w))
        H[k + 1, k] = hkk

        happy = hkk <= 1e-14 * normb
        if not happy:
            V.append(w / hkk)
        # apply accumulated Givens rotations, then form a new one
        for i in range(k):
            t1 = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t1
        denom = np.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        est = abs(g[k + 1]) / normb
        hist.append(est)

        if happy or est <= rel_tol:
            x = solution(k + 1)
            true_rel = float(np.linalg.norm(b - matvec(x))) / normb
            hist[-1] = true_rel
            if true_rel <= rel_tol:
                return x, SolverReport(k + 1, hist, True, wall_time=time.perf_counter() - t0)
            if happy:  # exact breakdown but residual above tolerance: report honestly
                rep = SolverReport(k + 1, hist, False, wall_time=time.perf_counter() - t0)
                rep.warnings.append("happy breakdown above tolerance")
                return x, rep
            # the Givens estimate was optimistic: keep iterating

    x = solution(max_iter)
    hist[-1] = float(np.linalg.norm(b - matvec(x))) / normb
    return x, SolverReport(max_iter, hist, False, wall_time=time.perf_counter() - t0)
