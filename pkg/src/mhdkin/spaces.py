"""Finite element spaces for the mixed formulation.

Four conforming families on tetrahedral meshes:

* ``HDIV_LINEAR``: full vector-P1, normal-continuous (3 DOFs per face, the
  moments int_F (v . n_F) q dS against the P1(F) barycentric weights ordered
  by ascending global vertex id, n_F the global face normal),
* ``L2_CONSTANT``: piecewise constants (DOF = cell average),
* ``HCURL_NEDELEC2``: full vector-P1, tangentially continuous (2 DOFs per
  edge, the moments int_e (v . t_e) q ds against {lambda_a, lambda_b},
  t_e from the lower to the higher global vertex id),
* ``H1_P2``: continuous quadratic Lagrange (vertex and edge-midpoint values).

The two vector-valued families are built per cell by inverting the 12 x 12
matrix of DOF functionals applied to centered, scaled vector monomials.
Because the functionals are attached to global entities (global normals,
tangents and weight orderings), inter-element continuity needs no
orientation corrections.  div and curl of any member are constant per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .mesh import LOCAL_EDGES, Mesh
from .quadrature import segment_rule, tet_rule, triangle_rule


class SpaceFamily(Enum):
    HDIV_LINEAR = "hdiv_linear"
    L2_CONSTANT = "l2_constant"
    HCURL_NEDELEC2 = "hcurl_nedelec2"
    H1_P2 = "h1_p2"


_VECTOR_FAMILIES = (SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2)

# scalar monomial order within a component: 1, xi1, xi2, xi3
_N_MONO = 4


@dataclass
class DofMap:
    """Global DOF layout of one space on one mesh.

    ``cell_dofs`` maps (cell, local dof) -> global dof.  ``constrained_idx``
    / ``constrained_val`` hold essential-BC DOFs and their values (empty
    until ``constrained_dofs`` is applied).
    """

    family: SpaceFamily
    mesh: Mesh
    num_dofs: int
    cell_dofs: np.ndarray
    constrained_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    constrained_val: np.ndarray = field(default_factory=lambda: np.empty(0))
    _basis: dict | None = field(default=None, repr=False, compare=False)

    @property
    def local_dim(self) -> int:
        return self.cell_dofs.shape[1]

    def basis_data(self) -> dict:
        if self._basis is None:
            self._basis = _build_basis(self)
        return self._basis


@dataclass
class FieldFunction:
    """A finite element function: a DofMap plus its coefficient vector."""

    dofmap: DofMap
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.dofmap.num_dofs,):
            raise ValueError("coefficient vector has wrong length")


def build_space(mesh: Mesh, family: SpaceFamily) -> DofMap:
    """Construct the DOF layout of ``family`` on ``mesh``."""
    C = mesh.num_cells
    if family is SpaceFamily.HDIV_LINEAR:
        nd = 3 * mesh.num_faces
        cd = (3 * mesh.cell_to_faces[:, :, None] + np.arange(3)).reshape(C, 12)
    elif family is SpaceFamily.L2_CONSTANT:
        nd = C
        cd = np.arange(C, dtype=np.int64)[:, None]
    elif family is SpaceFamily.HCURL_NEDELEC2:
        nd = 2 * mesh.num_edges
        cd = (2 * mesh.cell_to_edges[:, :, None] + np.arange(2)).reshape(C, 12)
    elif family is SpaceFamily.H1_P2:
        nd = mesh.num_vertices + mesh.num_edges
        cd = np.hstack([mesh.cells, mesh.num_vertices + mesh.cell_to_edges])
    else:  # pragma: no cover
        raise ValueError(f"unknown family {family}")
    return DofMap(family, mesh, nd, np.ascontiguousarray(cd, dtype=np.int64))


# ---------------------------------------------------------------------------
# per-cell basis construction
# ---------------------------------------------------------------------------

def _cell_scales(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    x0 = mesh.cell_coords.mean(axis=1)
    e = mesh.cell_coords[:, LOCAL_EDGES]               # (C,6,2,3)
    ln = np.linalg.norm(e[:, :, 1] - e[:, :, 0], axis=2)
    return x0, ln.max(axis=1)


def _monomials(xi: np.ndarray) -> np.ndarray:
    # (..., 3) -> (..., 4): [1, xi1, xi2, xi3]
    out = np.empty(xi.shape[:-1] + (_N_MONO,))
    out[..., 0] = 1.0
    out[..., 1:] = xi
    return out


def _build_basis(dofmap: DofMap) -> dict:
    mesh = dofmap.mesh
    fam = dofmap.family
    if fam is SpaceFamily.L2_CONSTANT or fam is SpaceFamily.H1_P2:
        return {}
    x0, s = _cell_scales(mesh)
    C = mesh.num_cells

    if fam is SpaceFamily.HDIV_LINEAR:
        rule = triangle_rule(4)
        u, v = rule.points.T
        w = rule.weights
        lam = np.column_stack([1.0 - u - v, u, v])                       # (Q,3)
        gf = mesh.cell_to_faces                                          # (C,4)
        fco = mesh.vertices[mesh.faces[gf]]                              # (C,4,3,3)
        # physical quadrature points per local face
        X = (
            fco[:, :, None, 0, :]
            + u[None, None, :, None] * (fco[:, :, None, 1, :] - fco[:, :, None, 0, :])
            + v[None, None, :, None] * (fco[:, :, None, 2, :] - fco[:, :, None, 0, :])
        )                                                                # (C,4,Q,3)
        xi = (X - x0[:, None, None, :]) / s[:, None, None, None]
        mono = _monomials(xi)                                            # (C,4,Q,4)
        nhat = mesh.face_normals[gf]                                     # (C,4,3)
        two_area = 2.0 * mesh.face_areas[gf]                             # (C,4)
        mom = np.einsum("q,qi,cfqk->cfik", w, lam, mono)                 # (C,4,3,4)
        V = np.einsum("cf,cfd,cfik->cfidk", two_area, nhat, mom)
        V = V.reshape(C, 12, 12)                                         # row 3f+i, col 4d+k
        coeff = np.linalg.inv(V)                                         # (C, 12(mono), 12(basis))
        coeff = np.ascontiguousarray(coeff.reshape(C, 3, _N_MONO, 12))
        div = (coeff[:, 0, 1, :] + coeff[:, 1, 2, :] + coeff[:, 2, 3, :]) / s[:, None]
        return {"x0": x0, "scale": s, "coeff": coeff, "div": div}

    if fam is SpaceFamily.HCURL_NEDELEC2:
        rule = segment_rule(4)
        t = rule.points[:, 0]
        w = rule.weights
        lam = np.column_stack([1.0 - t, t])                              # (Q,2)
        ge = mesh.cell_to_edges                                          # (C,6)
        eco = mesh.vertices[mesh.edges[ge]]                              # (C,6,2,3)
        tvec = eco[:, :, 1, :] - eco[:, :, 0, :]
        elen = np.linalg.norm(tvec, axis=2)
        that = tvec / elen[..., None]
        X = eco[:, :, None, 0, :] + t[None, None, :, None] * tvec[:, :, None, :]
        xi = (X - x0[:, None, None, :]) / s[:, None, None, None]
        mono = _monomials(xi)                                            # (C,6,Q,4)
        mom = np.einsum("q,qi,ceqk->ceik", w, lam, mono)                 # (C,6,2,4)
        V = np.einsum("ce,ced,ceik->ceidk", elen, that, mom)
        V = V.reshape(C, 12, 12)
        coeff = np.linalg.inv(V)
        coeff = np.ascontiguousarray(coeff.reshape(C, 3, _N_MONO, 12))
        curl = np.empty((C, 12, 3))
        curl[:, :, 0] = (coeff[:, 2, 2, :] - coeff[:, 1, 3, :]) / s[:, None]
        curl[:, :, 1] = (coeff[:, 0, 3, :] - coeff[:, 2, 1, :]) / s[:, None]
        curl[:, :, 2] = (coeff[:, 1, 1, :] - coeff[:, 0, 2, :]) / s[:, None]
        return {"x0": x0, "scale": s, "coeff": coeff, "curl": curl}

    raise ValueError(f"no basis construction for {fam}")  # pragma: no cover


# ---------------------------------------------------------------------------
# tabulation
# ---------------------------------------------------------------------------

def _ref_to_phys(mesh: Mesh, ref_pts: np.ndarray, cells: np.ndarray) -> np.ndarray:
    return mesh.cell_coords[cells, 0, :][:, None, :] + np.einsum(
        "cde,qe->cqd", mesh.jacobians[cells], ref_pts
    )


def _p2_ref_values(ref_pts: np.ndarray) -> np.ndarray:
    lam = np.column_stack([1.0 - ref_pts.sum(axis=1), ref_pts])          # (Q,4)
    vals = np.empty((ref_pts.shape[0], 10))
    vals[:, :4] = lam * (2.0 * lam - 1.0)
    for k, (a, b) in enumerate(LOCAL_EDGES):
        vals[:, 4 + k] = 4.0 * lam[:, a] * lam[:, b]
    return vals


def tabulate_values(dofmap: DofMap, ref_pts: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
    """Basis values at reference points on a range of cells.

    Shapes: (C, Q, 12, 3) for the vector families, (C, Q, 10) for H1_P2,
    (C, Q, 1) for L2_CONSTANT.
    """
    mesh = dofmap.mesh
    if cells is None:
        cells = np.arange(mesh.num_cells)
    ref_pts = np.atleast_2d(ref_pts)
    Q = ref_pts.shape[0]
    if dofmap.family in _VECTOR_FAMILIES:
        bd = dofmap.basis_data()
        X = _ref_to_phys(mesh, ref_pts, cells)
        xi = (X - bd["x0"][cells, None, :]) / bd["scale"][cells, None, None]
        mono = _monomials(xi)                                            # (C,Q,4)
        return np.einsum("cqk,cdkj->cqjd", mono, bd["coeff"][cells])
    if dofmap.family is SpaceFamily.H1_P2:
        vals = _p2_ref_values(ref_pts)                                   # cell-independent
        return np.broadcast_to(vals, (len(cells), Q, 10))
    return np.ones((len(cells), Q, 1))


def tabulate_div(dofmap: DofMap, cells: np.ndarray | None = None) -> np.ndarray:
    """Per-cell constant divergence of the H(div) basis, shape (C, 12)."""
    if dofmap.family is not SpaceFamily.HDIV_LINEAR:
        raise ValueError("div tabulation requires the H(div) family")
    bd = dofmap.basis_data()
    return bd["div"] if cells is None else bd["div"][cells]


def tabulate_curl(dofmap: DofMap, cells: np.ndarray | None = None) -> np.ndarray:
    """Per-cell constant curl of the edge-element basis, shape (C, 12, 3)."""
    if dofmap.family is not SpaceFamily.HCURL_NEDELEC2:
        raise ValueError("curl tabulation requires the edge-element family")
    bd = dofmap.basis_data()
    return bd["curl"] if cells is None else bd["curl"][cells]


def tabulate_grad(dofmap: DofMap, ref_pts: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
    """Gradients of the P2 basis at reference points, shape (C, Q, 10, 3)."""
    if dofmap.family is not SpaceFamily.H1_P2:
        raise ValueError("grad tabulation requires the P2 family")
    mesh = dofmap.mesh
    if cells is None:
        cells = np.arange(mesh.num_cells)
    ref_pts = np.atleast_2d(ref_pts)
    lam = np.column_stack([1.0 - ref_pts.sum(axis=1), ref_pts])          # (Q,4)
    g = mesh.grad_bary[cells]                                            # (C,4,3)
    out = np.empty((len(cells), ref_pts.shape[0], 10, 3))
    out[:, :, :4, :] = (4.0 * lam - 1.0)[None, :, :, None] * g[:, None, :, :]
    for k, (a, b) in enumerate(LOCAL_EDGES):
        out[:, :, 4 + k, :] = 4.0 * (
            lam[None, :, a, None] * g[:, None, b, :]
            + lam[None, :, b, None] * g[:, None, a, :]
        )
    return out


def eval_basis(dofmap: DofMap, cell: int, ref_points: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """All basis values (and natural derivatives) of one cell.

    Returns ``(values, derivative)`` where the derivative is the constant
    per-DOF div (H(div)), constant per-DOF curl (edge elements), pointwise
    gradients (P2), or None (constants).
    """
    if not 0 <= cell < dofmap.mesh.num_cells:
        raise IndexError(f"cell {cell} out of range")
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    lam0 = 1.0 - ref_points.sum(axis=1)
    if np.any(ref_points < -1e-12) or np.any(lam0 < -1e-12):
        raise ValueError("reference point outside the reference tetrahedron")
    cells = np.array([cell])
    vals = tabulate_values(dofmap, ref_points, cells)[0]
    if dofmap.family is SpaceFamily.HDIV_LINEAR:
        return vals, tabulate_div(dofmap, cells)[0]
    if dofmap.family is SpaceFamily.HCURL_NEDELEC2:
        return vals, tabulate_curl(dofmap, cells)[0]
    if dofmap.family is SpaceFamily.H1_P2:
        return np.array(vals), tabulate_grad(dofmap, ref_points, cells)[0]
    return np.array(vals), None


# ---------------------------------------------------------------------------
# interpolation and constraints
# ---------------------------------------------------------------------------

def interpolate(dofmap: DofMap, func: Callable[[np.ndarray], np.ndarray]) -> FieldFunction:
    """Canonical interpolation: apply every DOF functional to ``func``.

    ``func`` maps an (N, 3) array of points to (N, 3) values (vector
    families) or (N,) values (scalar families).  Facet and edge moments use
    quadrature exact to degree 5, cell averages degree 6.
    """
    mesh = dofmap.mesh
    fam = dofmap.family
    if fam is SpaceFamily.HDIV_LINEAR:
        rule = triangle_rule(4)
        u, v = rule.points.T
        w = rule.weights
        lam = np.column_stack([1.0 - u - v, u, v])
        fco = mesh.vertices[mesh.faces]                                  # (F,3,3)
        X = (
            fco[:, None, 0, :]
            + u[None, :, None] * (fco[:, None, 1, :] - fco[:, None, 0, :])
            + v[None, :, None] * (fco[:, None, 2, :] - fco[:, None, 0, :])
        )                                                                # (F,Q,3)
        vals = np.asarray(func(X.reshape(-1, 3))).reshape(X.shape)
        vn = np.einsum("fqd,fd->fq", vals, mesh.face_normals)
        mom = 2.0 * mesh.face_areas[:, None] * np.einsum("q,qi,fq->fi", w, lam, vn)
        return FieldFunction(dofmap, mom.reshape(-1))
    if fam is SpaceFamily.L2_CONSTANT:
        rule = tet_rule(6)
        X = _ref_to_phys(mesh, rule.points, np.arange(mesh.num_cells))
        vals = np.asarray(func(X.reshape(-1, 3))).reshape(X.shape[:2])
        avg = 6.0 * np.einsum("q,cq->c", rule.weights, vals)             # det/vol = 6
        return FieldFunction(dofmap, avg)
    if fam is SpaceFamily.HCURL_NEDELEC2:
        rule = segment_rule(4)
        t = rule.points[:, 0]
        w = rule.weights
        lam = np.column_stack([1.0 - t, t])
        eco = mesh.vertices[mesh.edges]                                  # (E,2,3)
        tvec = eco[:, 1, :] - eco[:, 0, :]
        X = eco[:, None, 0, :] + t[None, :, None] * tvec[:, None, :]
        vals = np.asarray(func(X.reshape(-1, 3))).reshape(X.shape)
        vt = np.einsum("eqd,ed->eq", vals, tvec)                         # |e| * (v.t_hat)
        mom = np.einsum("q,qi,eq->ei", w, lam, vt)
        return FieldFunction(dofmap, mom.reshape(-1))
    if fam is SpaceFamily.H1_P2:
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        vv = np.asarray(func(mesh.vertices))
        ev = np.asarray(func(mids))
        return FieldFunction(dofmap, np.concatenate([vv, ev]))
    raise ValueError(f"unknown family {fam}")  # pragma: no cover


def constrained_dofs(dofmap: DofMap, boundary_data: Callable[[np.ndarray], np.ndarray] | None = None) -> DofMap:
    """Return a copy of ``dofmap`` with essential boundary DOFs marked.

    Supported for the tangential-trace space (edge elements) and the P2
    multiplier space; ``boundary_data`` None means homogeneous values.
    """
    mesh = dofmap.mesh
    fam = dofmap.family
    if fam is SpaceFamily.HCURL_NEDELEC2:
        be = np.where(mesh.boundary_edge_mask)[0]
        idx = np.sort(np.concatenate([2 * be, 2 * be + 1]))
    elif fam is SpaceFamily.H1_P2:
        bv = np.where(mesh.boundary_vertex_mask)[0]
        be = np.where(mesh.boundary_edge_mask)[0]
        idx = np.sort(np.concatenate([bv, mesh.num_vertices + be]))
    else:
        raise ValueError(f"essential constraints unsupported for {fam}")
    if boundary_data is None:
        val = np.zeros(idx.size)
    else:
        val = interpolate(dofmap, boundary_data).coefficients[idx]
    return replace(dofmap, constrained_idx=idx, constrained_val=val)


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------

def eval_field_on_cells(field: FieldFunction, ref_pts: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
    """Field values at reference points on cells: (C, Q, 3) or (C, Q)."""
    dm = field.dofmap
    if cells is None:
        cells = np.arange(dm.mesh.num_cells)
    vals = tabulate_values(dm, ref_pts, cells)
    coefs = field.coefficients[dm.cell_dofs[cells]]                      # (C,nloc)
    if dm.family in _VECTOR_FAMILIES:
        return np.einsum("cqjd,cj->cqd", vals, coefs)
    return np.einsum("cqj,cj->cq", vals, coefs)


def eval_field_at_points(field: FieldFunction, points: np.ndarray) -> np.ndarray:
    """Pointwise evaluation via point location (cube lattice meshes)."""
    dm = field.dofmap
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells, xi = dm.mesh.locate(pts)
    coefs = field.coefficients[dm.cell_dofs[cells]]
    if dm.family in _VECTOR_FAMILIES:
        bd = dm.basis_data()
        X = dm.mesh.cell_coords[cells, 0, :] + np.einsum(
            "cde,ce->cd", dm.mesh.jacobians[cells], xi
        )
        mono = _monomials((X - bd["x0"][cells]) / bd["scale"][cells, None])
        vals = np.einsum("ck,cdkj->cjd", mono, bd["coeff"][cells])
        return np.einsum("cjd,cj->cd", vals, coefs)
    if dm.family is SpaceFamily.H1_P2:
        vals = np.stack([_p2_ref_values(x[None, :])[0] for x in xi])
        return np.einsum("cj,cj->c", vals, coefs)
    return coefs[:, 0]
