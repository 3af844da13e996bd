"""Block upper-triangular preconditioner and the outer FGMRES driver.

The outer operator is the 4 x 4 saddle system in the unknown order
(J, phi, A, r).  The right preconditioner is its block upper-triangular
approximation

    [ Mhat  2 G^T   K     0    ]
    [  0   -Qhat    0     0    ]
    [  0     0     Fhat  2 B^T ]
    [  0     0      0    -L    ]

applied by back-substitution: the multiplier correction from the P2
stiffness L, the vector-potential correction from Fhat (curl-curl + mass),
the potential correction from the exactly diagonal Qhat, and the current
correction from Mhat (mass + div-div).  Qhat is inverted exactly; the three
SPD blocks are solved by symmetric-Gauss-Seidel-preconditioned CG to a
fixed relative tolerance, so the preconditioner varies between outer
iterations and the outer loop must be flexible GMRES.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .sparse_linalg import SolverReport, cg_solve, fgmres_solve, sgs_preconditioner
from .spaces import FieldFunction

_INNER_NAMES = ("L", "Fhat", "Mhat")


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous layout of the unknowns (J, phi, A, r) in one flat vector."""

    sizes: tuple[int, int, int, int]
    names = ("J", "phi", "A", "r")

    @property
    def offsets(self) -> tuple[int, ...]:
        out = [0]
        for s in self.sizes:
            out.append(out[-1] + s)
        return tuple(out)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        o = self.offsets
        return tuple(x[o[i] : o[i + 1]] for i in range(4))

    def join(self, parts) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def _inner_solvers(system) -> dict:
    # cache SGS setups for the SPD preconditioner blocks
    cache = system.cache.setdefault("sgs", {})
    for name in _INNER_NAMES:
        if name not in cache:
            cache[name] = sgs_preconditioner(system.blocks[name])
    return cache


def apply_P_inverse(
    system,
    r: np.ndarray,
    inner_tol: float = 1e-3,
    inner_max_iter: int = 2000,
    stats: dict | None = None,
) -> np.ndarray:
    """One right-preconditioner application e = P^-1 r by back-substitution."""
    bl = system.blocks
    rJ, rphi, rA, rr = system.partition.split(r)
    sgs = _inner_solvers(system)

    def inner(name, rhs):
        x, rep = cg_solve(
            bl[name], rhs, preconditioner=sgs[name],
            rel_tol=inner_tol, max_iter=inner_max_iter,
        )
        if stats is not None:
            stats[name] = stats.get(name, 0) + rep.iterations
            if not rep.converged:
                stats.setdefault("warnings", []).append(
                    f"inner CG on {name} stopped at {rep.residuals[-1]:.2e} relative"
                )
        return x

    e_r = -inner("L", rr)
    e_A = inner("Fhat", rA - 2.0 * (bl["BT"] @ e_r))
    e_phi = -rphi / bl["Qhat_diag"]
    if stats is not None:
        stats["Qhat"] = stats.get("Qhat", 0)
    e_J = inner("Mhat", rJ - 2.0 * (bl["GT"] @ e_phi) - bl["K"] @ e_A)
    return system.partition.join([e_J, e_phi, e_A, e_r])


def solve_mhd_system(
    system,
    eps: float = 1e-10,
    eps0: float = 1e-3,
    max_outer: int = 500,
) -> tuple[tuple[FieldFunction, FieldFunction, FieldFunction, FieldFunction], SolverReport]:
    """Solve the assembled system by preconditioned FGMRES.

    Returns the four fields (J_h, phi_h, A_h, r_h) and the outer solver
    report with per-block inner iteration totals.  Constrained DOFs carry
    their prescribed boundary values exactly.
    """
    t0 = time.perf_counter()
    stats: dict = {}

    def precond(r):
        return apply_P_inverse(system, r, inner_tol=eps0, stats=stats)

    x, report = fgmres_solve(
        system.operator(), system.rhs, preconditioner=precond,
        rel_tol=eps, max_iter=max_outer,
    )
    warnings = stats.pop("warnings", [])
    report.inner.update({k: int(v) for k, v in stats.items()})
    report.warnings.extend(warnings)
    report.wall_time = time.perf_counter() - t0

    xJ, xphi, xA, xr = system.partition.split(x)
    sp = system.spaces
    xA = xA.copy()
    xr = xr.copy()
    xA[sp.ch.constrained_idx] = sp.ch.constrained_val
    xr[sp.rh.constrained_idx] = sp.rh.constrained_val
    fields = (
        FieldFunction(sp.dh, xJ.copy()),
        FieldFunction(sp.sh, xphi.copy()),
        FieldFunction(sp.ch, xA),
        FieldFunction(sp.rh, xr),
    )
    return fields, report
