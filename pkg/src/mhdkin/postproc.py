"""Postprocessing: error norms, conservation checks, recovered fields.

All volume integrals use the same degree-6 rule as assembly and the
boundary integral the same degree-4 facet rule, so the reported discrete
identities hold to solver tolerance rather than quadrature error.

The energy balance evaluates the exact discrete identities of the scheme,

  eta ||J_h||^2 = (f, J_h) - surf_int phi_w (J_h . n) - (J_h x B_h, w)
  nu_m ||B_h||^2 = (g, A_h) + (J_h, A_h) - C_g

where C_g collects the boundary lifting of the prescribed tangential data
(A_g = zero-extension of the constrained DOFs):

  C_g = (g, A_g) + (J_h, A_g) - nu_m (B_h, curl A_g) - (grad r_h, A_g).

With homogeneous data (phi_w = 0, A_w = 0) both right sides reduce to the
classical balance (f, J_h) - (J_h x B_h, w) and (g, A_h) + (J_h, A_h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Mesh
from .problems import ProblemSpec
from .quadrature import tet_rule, triangle_rule
from .sparse_linalg import SolverReport, cg_solve, sgs_preconditioner
from .spaces import (
    FieldFunction,
    SpaceFamily,
    eval_field_on_cells,
    tabulate_curl,
    tabulate_div,
    tabulate_grad,
    tabulate_values,
)

_CHUNK = 4096
_RULE = tet_rule(6)


@dataclass
class CellField:
    """A cellwise-constant vector field (e.g. the recovered induction)."""

    mesh: Mesh
    values: np.ndarray


def _phys_points(mesh: Mesh, cells: np.ndarray) -> np.ndarray:
    return mesh.cell_coords[cells, 0, :][:, None, :] + np.einsum(
        "cde,qe->cqd", mesh.jacobians[cells], _RULE.points
    )


def _chunks(n: int):
    for s in range(0, n, _CHUNK):
        yield np.arange(s, min(s + _CHUNK, n))


def error_norm(
    field: FieldFunction,
    exact: Callable[[np.ndarray], np.ndarray],
    norm: str = "L2",
    exact_curl: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """L2 or full H(curl) distance between a FE field and a reference field."""
    if norm not in ("L2", "Hcurl_full"):
        raise ValueError(f"unknown norm {norm!r}")
    dm = field.dofmap
    mesh = dm.mesh
    wq = _RULE.weights
    total = 0.0
    vector = dm.family in (SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2)
    if norm == "Hcurl_full":
        if dm.family is not SpaceFamily.HCURL_NEDELEC2:
            raise ValueError("Hcurl_full norm requires an edge-element field")
        if exact_curl is None:
            raise ValueError("Hcurl_full norm needs the reference curl")
    for chunk in _chunks(mesh.num_cells):
        X = _phys_points(mesh, chunk)
        det = mesh.dets[chunk]
        vals = eval_field_on_cells(field, _RULE.points, chunk)
        if vector:
            ex = np.asarray(exact(X.reshape(-1, 3))).reshape(X.shape)
            diff2 = np.sum((vals - ex) ** 2, axis=2)
        else:
            ex = np.asarray(exact(X.reshape(-1, 3))).reshape(X.shape[:2])
            diff2 = (vals - ex) ** 2
        total += float(np.einsum("q,cq,c->", wq, diff2, det))
        if norm == "Hcurl_full":
            curls = np.einsum(
                "cjd,cj->cd", tabulate_curl(dm, chunk), field.coefficients[dm.cell_dofs[chunk]]
            )
            exc = np.asarray(exact_curl(X.reshape(-1, 3))).reshape(X.shape)
            cdiff2 = np.sum((curls[:, None, :] - exc) ** 2, axis=2)
            total += float(np.einsum("q,cq,c->", wq, cdiff2, det))
    return float(np.sqrt(total))


def div_norm(field: FieldFunction) -> float:
    """Exact L2 norm of the (cellwise constant) divergence of an H(div) field."""
    dm = field.dofmap
    if dm.family is not SpaceFamily.HDIV_LINEAR:
        raise ValueError("div_norm requires an H(div) field")
    d = np.einsum("cj,cj->c", tabulate_div(dm), field.coefficients[dm.cell_dofs])
    return float(np.sqrt(np.sum(dm.mesh.volumes * d * d)))


def recover_B(A_h: FieldFunction) -> CellField:
    """B_h = curl A_h, exactly constant per cell."""
    dm = A_h.dofmap
    if dm.family is not SpaceFamily.HCURL_NEDELEC2:
        raise ValueError("recover_B requires an edge-element field")
    vals = np.einsum("cjd,cj->cd", tabulate_curl(dm), A_h.coefficients[dm.cell_dofs])
    return CellField(dm.mesh, vals)


def b_div_check(B: CellField) -> float:
    """Maximum normal jump |[[B . n]]| over interior faces.

    A normal-continuous piecewise-constant field is divergence-free in the
    distributional sense, so this is the discrete div B residual.
    """
    mesh = B.mesh
    interior = np.where(~mesh.boundary_face_mask)[0]
    c1 = mesh.face_cells[interior, 0]
    c2 = mesh.face_cells[interior, 1]
    jump = np.einsum(
        "fd,fd->f", B.values[c1] - B.values[c2], mesh.face_normals[interior]
    )
    return float(np.max(np.abs(jump))) if interior.size else 0.0


def recover_E(
    J_h: FieldFunction, A_h: FieldFunction, problem: ProblemSpec
) -> Callable[[np.ndarray], np.ndarray]:
    """Pointwise electric field E(x) = eta J_h(x) - w(x) x B_h(x)."""
    from .spaces import eval_field_at_points

    B = recover_B(A_h)
    eta = problem.eta

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        E = eta * eval_field_at_points(J_h, pts)
        if problem.w is not None:
            cells, _ = B.mesh.locate(pts)
            E -= np.cross(problem.w(pts), B.values[cells])
        return E

    return evaluate


def energy_check(fields, problem: ProblemSpec, system=None) -> dict:
    """Evaluate both sides of the two discrete energy identities.

    ``fields`` is the (J_h, phi_h, A_h, r_h) tuple from the solver.
    Returns lhs/rhs pairs; for a solved system each pair agrees to solver
    tolerance.
    """
    J_h, _, A_h, r_h = fields
    mesh = J_h.dofmap.mesh
    wq = _RULE.weights
    eta, nu_m = problem.eta, problem.nu_m
    Bc = recover_B(A_h).values
    ch = A_h.dofmap
    rh = r_h.dofmap
    A_g = FieldFunction(ch, np.zeros(ch.num_dofs))
    A_g.coefficients[ch.constrained_idx] = ch.constrained_val
    have_lift = ch.constrained_idx.size > 0 and np.any(ch.constrained_val != 0.0)
    cAg = (
        np.einsum("cjd,cj->cd", tabulate_curl(ch), A_g.coefficients[ch.cell_dofs])
        if have_lift else None
    )

    lhs1 = rhs1 = lhs2 = rhs2 = 0.0
    Cg = 0.0
    for chunk in _chunks(mesh.num_cells):
        X = _phys_points(mesh, chunk)
        det = mesh.dets[chunk]
        Jv = eval_field_on_cells(J_h, _RULE.points, chunk)
        Av = eval_field_on_cells(A_h, _RULE.points, chunk)
        fv = np.asarray(problem.f(X.reshape(-1, 3))).reshape(X.shape)
        gv = np.asarray(problem.g(X.reshape(-1, 3))).reshape(X.shape)

        lhs1 += eta * float(np.einsum("q,cqd,cqd,c->", wq, Jv, Jv, det))
        rhs1 += float(np.einsum("q,cqd,cqd,c->", wq, fv, Jv, det))
        if problem.w is not None:
            wv = np.asarray(problem.w(X.reshape(-1, 3))).reshape(X.shape)
            JxB = np.cross(Jv, Bc[chunk][:, None, :])
            rhs1 -= float(np.einsum("q,cqd,cqd,c->", wq, JxB, wv, det))
        rhs2 += float(np.einsum("q,cqd,cqd,c->", wq, gv + Jv, Av, det))
        if have_lift:
            Agv = eval_field_on_cells(A_g, _RULE.points, chunk)
            Cg += float(np.einsum("q,cqd,cqd,c->", wq, gv + Jv, Agv, det))
            Cg -= nu_m * float(np.einsum("cd,cd,c->", Bc[chunk], cAg[chunk], mesh.volumes[chunk]))
            gradr = np.einsum(
                "cqjd,cj->cqd",
                tabulate_grad(rh, _RULE.points, chunk),
                r_h.coefficients[rh.cell_dofs[chunk]],
            )
            Cg -= float(np.einsum("q,cqd,cqd,c->", wq, gradr, Agv, det))
    lhs2 = nu_m * float(np.sum(mesh.volumes * np.sum(Bc * Bc, axis=1)))
    rhs2 -= Cg

    if problem.phi_w is not None:
        rhs1 -= _boundary_flux(J_h, problem.phi_w)
    return {"lhs1": lhs1, "rhs1": rhs1, "lhs2": lhs2, "rhs2": rhs2}


def _boundary_flux(J_h: FieldFunction, phi_w) -> float:
    """surf_int phi_w (J_h . n_outward) with the facet rule used in assembly."""
    mesh = J_h.dofmap.mesh
    rule = triangle_rule(4)
    u, v = rule.points.T
    wq = rule.weights
    bf = np.where(mesh.boundary_face_mask)[0]
    cells = mesh.face_cells[bf, 0]
    fco = mesh.vertices[mesh.faces[bf]]
    X = (
        fco[:, None, 0, :]
        + u[None, :, None] * (fco[:, None, 1, :] - fco[:, None, 0, :])
        + v[None, :, None] * (fco[:, None, 2, :] - fco[:, None, 0, :])
    )
    sign = np.sign(
        np.einsum("fd,fd->f", mesh.face_normals[bf], fco.mean(axis=1) - mesh.cell_coords[cells].mean(axis=1))
    )
    n_out = sign[:, None] * mesh.face_normals[bf]
    dm = J_h.dofmap
    bd = dm.basis_data()
    mono = np.empty(X.shape[:2] + (4,))
    mono[..., 0] = 1.0
    mono[..., 1:] = (X - bd["x0"][cells, None, :]) / bd["scale"][cells, None, None]
    vals = np.einsum("fqk,fdkj->fqjd", mono, bd["coeff"][cells])
    Jv = np.einsum("fqjd,fj->fqd", vals, J_h.coefficients[dm.cell_dofs[cells]])
    pw = np.asarray(phi_w(X.reshape(-1, 3))).reshape(X.shape[:2])
    return float(
        np.einsum("q,fq,fq,f->", wq, pw, np.einsum("fqd,fd->fq", Jv, n_out), 2.0 * mesh.face_areas[bf])
    )


def improve_phi(system, fields, rel_tol: float = 1e-10) -> tuple[FieldFunction, SolverReport]:
    """Recover a nodal potential from the induced electric field.

    Solves (grad phi, grad psi) = (w x B_h + f, grad psi) in the P2 space
    with zero essential values, reusing the assembled stiffness block.
    """
    J_h, _, A_h, _ = fields
    problem = system.problem
    rh = system.spaces.rh
    mesh = rh.mesh
    wq = _RULE.weights
    Bc = recover_B(A_h).values
    rhs = np.zeros(rh.num_dofs)
    for chunk in _chunks(mesh.num_cells):
        X = _phys_points(mesh, chunk)
        det = mesh.dets[chunk]
        src = np.asarray(problem.f(X.reshape(-1, 3))).reshape(X.shape)
        if problem.w is not None:
            wv = np.asarray(problem.w(X.reshape(-1, 3))).reshape(X.shape)
            src = src + np.cross(wv, np.broadcast_to(Bc[chunk][:, None, :], X.shape))
        gr = tabulate_grad(rh, _RULE.points, chunk)
        np.add.at(rhs, rh.cell_dofs[chunk], np.einsum("q,cqd,cqid,c->ci", wq, src, gr, det))
    rhs[rh.constrained_idx] = 0.0
    L = system.blocks["L"]
    phi, rep = cg_solve(L, rhs, preconditioner=sgs_preconditioner(L), rel_tol=rel_tol, max_iter=5000)
    return FieldFunction(rh, phi), rep


def convergence_order(h: list[float], e: list[float]) -> list[float | None]:
    """Observed orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}); first entry None."""
    out: list[float | None] = [None]
    for i in range(1, len(h)):
        if e[i] == 0.0 or e[i - 1] == 0.0:
            out.append(None)
        else:
            out.append(float(np.log(e[i - 1] / e[i]) / np.log(h[i - 1] / h[i])))
    return out
