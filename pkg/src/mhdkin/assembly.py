"""Galerkin assembly of the mixed system and its preconditioner blocks.

System blocks (eta = 1/sigma, nu_m = 1/Rm; phi/psi from the H(div) space,
a from the edge space, s from the P2 multiplier space):

    M_ij = eta (phi_j, phi_i)          G_ij = -(div phi_j, psi_i)
    K_ij = (curl a_j x w, phi_i)       X_ij = -(phi_j, a_i)
    F_ij = nu_m (curl a_j, curl a_i)   B_ij = (a_j, grad s_i)

Preconditioner blocks: Mhat = eta (mass + div-div), Qhat = sigma * P0 mass
(exactly diagonal), Fhat = nu_m curl-curl + mass, L = P2 stiffness.

All volume integrals use one degree-6 rule; because every integrand except
the data terms is polynomial of degree <= 2, assembly is exact and the
discrete conservation identities hold to solver precision.  The rhs carries
the boundary flux term -surf_int phi_w (v . n) from integrating the
potential gradient by parts; outward normals are taken per boundary face.

Essential constraints (tangential trace of A, multiplier trace) are
eliminated symmetrically: prescribed columns are lifted to the rhs, rows
and columns zeroed, and a unit diagonal placed in the owning diagonal
block; the otherwise empty (r, r) block receives unit entries so the
monolithic operator stays nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .mesh import Mesh
from .preconditioner import BlockPartition
from .problems import ProblemSpec
from .quadrature import tet_rule, triangle_rule
from .sparse_linalg import as_csr
from .spaces import (
    DofMap,
    SpaceFamily,
    build_space,
    constrained_dofs,
    tabulate_curl,
    tabulate_div,
    tabulate_grad,
    tabulate_values,
)

_CHUNK = 4096
_VOLUME_DEGREE = 6
_FACET_DEGREE = 4

BLOCK_IDS = ("M", "G", "K", "X", "F", "B", "Mhat", "Qhat", "Fhat", "L")


@dataclass
class SpaceSet:
    """The four discrete spaces of the formulation on one mesh."""

    mesh: Mesh
    dh: DofMap   # H(div) current density
    sh: DofMap   # P0 potential
    ch: DofMap   # edge-element vector potential
    rh: DofMap   # P2 multiplier

    @property
    def partition(self) -> BlockPartition:
        return BlockPartition((self.dh.num_dofs, self.sh.num_dofs, self.ch.num_dofs, self.rh.num_dofs))


def build_spaces(mesh: Mesh, a_w: Callable | None = None) -> SpaceSet:
    """Build all four spaces; essential constraints use ``a_w`` (None = zero)."""
    return SpaceSet(
        mesh=mesh,
        dh=build_space(mesh, SpaceFamily.HDIV_LINEAR),
        sh=build_space(mesh, SpaceFamily.L2_CONSTANT),
        ch=constrained_dofs(build_space(mesh, SpaceFamily.HCURL_NEDELEC2), a_w),
        rh=constrained_dofs(build_space(mesh, SpaceFamily.H1_P2)),
    )


@dataclass
class BlockSystem:
    """Assembled blocks, right-hand side and solver-side caches."""

    spaces: SpaceSet
    params: dict
    partition: BlockPartition
    blocks: dict
    rhs: np.ndarray
    problem: ProblemSpec | None = None
    constrained: bool = False
    cache: dict = field(default_factory=dict, repr=False)

    def operator(self) -> Callable[[np.ndarray], np.ndarray]:
        bl = self.blocks

        def matvec(x: np.ndarray) -> np.ndarray:
            xJ, xphi, xA, xr = self.partition.split(x)
            yJ = bl["M"] @ xJ + bl["GT"] @ xphi + bl["K"] @ xA
            yphi = bl["G"] @ xJ
            yA = bl["X"] @ xJ + bl["F"] @ xA + bl["BT"] @ xr
            yr = bl["B"] @ xA + bl["Zr"] @ xr
            return self.partition.join([yJ, yphi, yA, yr])

        return matvec


# ---------------------------------------------------------------------------
# element integration helpers
# ---------------------------------------------------------------------------

def _phys_points(mesh: Mesh, ref_pts: np.ndarray, cells: np.ndarray) -> np.ndarray:
    return mesh.cell_coords[cells, 0, :][:, None, :] + np.einsum(
        "cde,qe->cqd", mesh.jacobians[cells], ref_pts
    )


def _scatter(triplets, rows_map: np.ndarray, cols_map: np.ndarray, local: np.ndarray) -> None:
    nr, nc = local.shape[1:]
    rows = np.broadcast_to(rows_map[:, :, None], local.shape)
    cols = np.broadcast_to(cols_map[:, None, :], local.shape)
    triplets[0].append(rows.ravel().copy())
    triplets[1].append(cols.ravel().copy())
    triplets[2].append(local.ravel().copy())


def _finish(triplets, shape) -> sp.csr_matrix:
    if not triplets[2]:
        return sp.csr_matrix(shape)
    rows = np.concatenate(triplets[0])
    cols = np.concatenate(triplets[1])
    vals = np.concatenate(triplets[2])
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=shape))


def _assemble_volume(spaces: SpaceSet, params: dict, w: Callable | None,
                     which: set[str], problem: ProblemSpec | None):
    """One pass over cell chunks computing the requested blocks and rhs."""
    mesh = spaces.mesh
    sigma = float(params["sigma"])
    rm = float(params["rm"])
    eta, nu_m = 1.0 / sigma, 1.0 / rm
    rule = tet_rule(_VOLUME_DEGREE)
    wq, ref = rule.weights, rule.points

    trip = {b: ([], [], []) for b in which if b not in ("G", "Qhat")}
    rhs_J = np.zeros(spaces.dh.num_dofs)
    rhs_A = np.zeros(spaces.ch.num_dofs)

    need_dv = which & {"M", "Mhat", "X", "K"} or problem is not None
    need_av = which & {"X", "B", "Fhat"} or problem is not None
    need_gr = which & {"B", "L"}
    need_cu = which & {"K"}
    need_w = ("K" in which) and w is not None

    for start in range(0, mesh.num_cells, _CHUNK):
        chunk = np.arange(start, min(start + _CHUNK, mesh.num_cells))
        det = mesh.dets[chunk]
        dd = spaces.dh.cell_dofs[chunk]
        ad = spaces.ch.cell_dofs[chunk]
        rd = spaces.rh.cell_dofs[chunk]
        dv = tabulate_values(spaces.dh, ref, chunk) if need_dv else None
        av = tabulate_values(spaces.ch, ref, chunk) if need_av else None
        gr = tabulate_grad(spaces.rh, ref, chunk) if need_gr else None
        cu = tabulate_curl(spaces.ch, chunk) if need_cu else None
        X = _phys_points(mesh, ref, chunk) if (need_w or problem is not None) else None

        if "M" in which:
            loc = eta * np.einsum("q,cqid,cqjd,c->cij", wq, dv, dv, det)
            _scatter(trip["M"], dd, dd, loc)
        if "Mhat" in which:
            divs = tabulate_div(spaces.dh, chunk)
            loc = eta * np.einsum("q,cqid,cqjd,c->cij", wq, dv, dv, det)
            loc += eta * np.einsum("ci,cj,c->cij", divs, divs, mesh.volumes[chunk])
            _scatter(trip["Mhat"], dd, dd, loc)
        if "X" in which:
            loc = -np.einsum("q,cqid,cqjd,c->cij", wq, av, dv, det)
            _scatter(trip["X"], ad, dd, loc)
        if "K" in which and need_w:
            wv = np.asarray(w(X.reshape(-1, 3))).reshape(X.shape)
            crossed = np.cross(cu[:, None, :, :], wv[:, :, None, :])     # (c,q,j,3)
            loc = np.einsum("q,cqjd,cqid,c->cij", wq, crossed, dv, det)
            _scatter(trip["K"], dd, ad, loc)
        if "B" in which:
            loc = np.einsum("q,cqid,cqjd,c->cij", wq, gr, av, det)
            _scatter(trip["B"], rd, ad, loc)
        if "Fhat" in which:
            curls = tabulate_curl(spaces.ch, chunk)
            loc = np.einsum("q,cqid,cqjd,c->cij", wq, av, av, det)
            loc += nu_m * np.einsum("cid,cjd,c->cij", curls, curls, mesh.volumes[chunk])
            _scatter(trip["Fhat"], ad, ad, loc)
        if "L" in which:
            loc = np.einsum("q,cqid,cqjd,c->cij", wq, gr, gr, det)
            _scatter(trip["L"], rd, rd, loc)
        if problem is not None:
            fv = np.asarray(problem.f(X.reshape(-1, 3))).reshape(X.shape)
            gv = np.asarray(problem.g(X.reshape(-1, 3))).reshape(X.shape)
            np.add.at(rhs_J, dd, np.einsum("q,cqd,cqid,c->ci", wq, fv, dv, det))
            np.add.at(rhs_A, ad, np.einsum("q,cqd,cqid,c->ci", wq, gv, av, det))

    D, S = spaces.dh.num_dofs, spaces.sh.num_dofs
    Cn, R = spaces.ch.num_dofs, spaces.rh.num_dofs
    out = {}
    if "M" in which:
        out["M"] = _finish(trip["M"], (D, D))
    if "Mhat" in which:
        out["Mhat"] = _finish(trip["Mhat"], (D, D))
    if "X" in which:
        out["X"] = _finish(trip["X"], (Cn, D))
    if "K" in which:
        out["K"] = _finish(trip["K"], (D, Cn)) if need_w else sp.csr_matrix((D, Cn))
    if "B" in which:
        out["B"] = _finish(trip["B"], (R, Cn))
    if "Fhat" in which:
        out["Fhat"] = _finish(trip["Fhat"], (Cn, Cn))
    if "L" in which:
        out["L"] = _finish(trip["L"], (R, R))

    # closed-form blocks: constant div/curl and cell volumes
    if "G" in which:
        divs = tabulate_div(spaces.dh)
        rows = np.repeat(np.arange(spaces.sh.num_dofs), 12)
        cols = spaces.dh.cell_dofs.ravel()
        vals = (-divs * mesh.volumes[:, None]).ravel()
        out["G"] = as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(S, D)))
    if "F" in which:
        curls = tabulate_curl(spaces.ch)
        loc = nu_m * np.einsum("cid,cjd,c->cij", curls, curls, mesh.volumes)
        t = ([], [], [])
        _scatter(t, spaces.ch.cell_dofs, spaces.ch.cell_dofs, loc)
        out["F"] = _finish(t, (Cn, Cn))
    if "Qhat" in which:
        out["Qhat_diag"] = sigma * mesh.volumes.copy()
        out["Qhat"] = sp.diags(out["Qhat_diag"]).tocsr()

    rhs = None
    if problem is not None:
        if problem.phi_w is not None:
            rhs_J -= _boundary_flux_term(spaces, problem.phi_w)
        rhs = np.concatenate([rhs_J, np.zeros(S), rhs_A, np.zeros(R)])
    return out, rhs


def _boundary_flux_term(spaces: SpaceSet, phi_w: Callable) -> np.ndarray:
    """surf_int phi_w (v . n_outward) over the boundary, per H(div) DOF."""
    mesh = spaces.mesh
    rule = triangle_rule(_FACET_DEGREE)
    u, v = rule.points.T
    wq = rule.weights
    bf = np.where(mesh.boundary_face_mask)[0]
    cells = mesh.face_cells[bf, 0]
    fco = mesh.vertices[mesh.faces[bf]]                                   # (Fb,3,3)
    X = (
        fco[:, None, 0, :]
        + u[None, :, None] * (fco[:, None, 1, :] - fco[:, None, 0, :])
        + v[None, :, None] * (fco[:, None, 2, :] - fco[:, None, 0, :])
    )                                                                     # (Fb,Q,3)
    # outward orientation of the stored global normal
    fcent = fco.mean(axis=1)
    ccent = mesh.cell_coords[cells].mean(axis=1)
    sign = np.sign(np.einsum("fd,fd->f", mesh.face_normals[bf], fcent - ccent))
    n_out = sign[:, None] * mesh.face_normals[bf]

    bd = spaces.dh.basis_data()
    mono = np.empty(X.shape[:2] + (4,))
    mono[..., 0] = 1.0
    mono[..., 1:] = (X - bd["x0"][cells, None, :]) / bd["scale"][cells, None, None]
    vals = np.einsum("fqk,fdkj->fqjd", mono, bd["coeff"][cells])          # (Fb,Q,12,3)
    pw = np.asarray(phi_w(X.reshape(-1, 3))).reshape(X.shape[:2])
    contrib = 2.0 * mesh.face_areas[bf, None] * np.einsum(
        "q,fq,fqjd,fd->fj", wq, pw, vals, n_out
    )
    out = np.zeros(spaces.dh.num_dofs)
    np.add.at(out, spaces.dh.cell_dofs[cells], contrib)
    return out


# ---------------------------------------------------------------------------
# public assembly API
# ---------------------------------------------------------------------------

def assemble_block(block_id: str, spaces: SpaceSet, params: dict, w: Callable | None = None) -> sp.csr_matrix:
    """Assemble one named block (unconstrained)."""
    if block_id not in BLOCK_IDS:
        raise ValueError(f"unknown block {block_id!r}; valid: {BLOCK_IDS}")
    out, _ = _assemble_volume(spaces, params, w, {block_id}, None)
    return out[block_id]


def assemble_rhs(problem: ProblemSpec, spaces: SpaceSet) -> np.ndarray:
    """Assemble the load vector (f, g, boundary flux term), unconstrained."""
    _, rhs = _assemble_volume(spaces, {"sigma": problem.sigma, "rm": problem.rm},
                              problem.w, set(), problem)
    return rhs


def build_block_system(mesh_or_spaces, problem: ProblemSpec, apply_bc: bool = True) -> BlockSystem:
    """Assemble the full system and preconditioner for one problem.

    Accepts either a mesh (spaces are built with the problem's boundary
    data) or a prebuilt SpaceSet.
    """
    if isinstance(mesh_or_spaces, SpaceSet):
        spaces = mesh_or_spaces
    else:
        spaces = build_spaces(mesh_or_spaces, problem.A_w)
    params = {"sigma": problem.sigma, "rm": problem.rm}
    which = set(BLOCK_IDS)
    blocks, rhs = _assemble_volume(spaces, params, problem.w, which, problem)
    blocks["GT"] = as_csr(blocks["G"].T)
    blocks["BT"] = as_csr(blocks["B"].T)
    R = spaces.rh.num_dofs
    blocks["Zr"] = sp.csr_matrix((R, R))
    system = BlockSystem(
        spaces=spaces, params=params, partition=spaces.partition,
        blocks=blocks, rhs=rhs, problem=problem,
    )
    if apply_bc:
        apply_constraints(system)
    return system


def _zero_rows(A: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    mask = np.zeros(A.shape[0], dtype=bool)
    mask[idx] = True
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    A.data[mask[rows]] = 0.0
    A.eliminate_zeros()
    return A

def _zero_cols(A: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    mask = np.zeros(A.shape[1], dtype=bool)
    mask[idx] = True
    A.data[mask[A.indices]] = 0.0
    A.eliminate_zeros()
    return A


def _unit_diag(A: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    if idx.size == 0:
        return A
    I = sp.coo_matrix((np.ones(idx.size), (idx, idx)), shape=A.shape)
    return as_csr(A + I)


def _extend(idx: np.ndarray, val: np.ndarray, n: int) -> np.ndarray:
    full = np.zeros(n)
    full[idx] = val
    return full


def apply_constraints(system: BlockSystem) -> BlockSystem:
    """Symmetric elimination of the essential constraints, in place."""
    if system.constrained:
        return system
    sp_set = system.spaces
    bl = system.blocks
    ca, va = sp_set.ch.constrained_idx, sp_set.ch.constrained_val
    cr, vr = sp_set.rh.constrained_idx, sp_set.rh.constrained_val
    part = system.partition
    o = part.offsets
    rJ = system.rhs[o[0] : o[1]]
    rA = system.rhs[o[2] : o[3]]
    rr = system.rhs[o[3] : o[4]]

    va_full = _extend(ca, va, sp_set.ch.num_dofs)
    vr_full = _extend(cr, vr, sp_set.rh.num_dofs)

    # lift prescribed values into the rhs of every coupled row
    rJ -= bl["K"] @ va_full
    rA -= bl["F"] @ va_full + bl["BT"] @ vr_full
    rr -= bl["B"] @ va_full

    _zero_cols(bl["K"], ca)
    _zero_rows(bl["X"], ca)
    _zero_rows(_zero_cols(bl["F"], ca), ca)
    bl["F"] = _unit_diag(bl["F"], ca)
    _zero_cols(_zero_rows(bl["B"], cr), ca)
    bl["BT"] = as_csr(bl["B"].T)
    bl["Zr"] = _unit_diag(sp.csr_matrix((sp_set.rh.num_dofs,) * 2), cr)
    # preconditioner diagonal blocks share the constraint structure
    _zero_rows(_zero_cols(bl["Fhat"], ca), ca)
    bl["Fhat"] = _unit_diag(bl["Fhat"], ca)
    _zero_rows(_zero_cols(bl["L"], cr), cr)
    bl["L"] = _unit_diag(bl["L"], cr)

    rA[ca] = va
    rr[cr] = vr
    system.constrained = True
    system.cache.clear()
    return system


def write_matrix_market(A, path: str, comment: str = "") -> None:
    """Debug export of one block in MatrixMarket coordinate format."""
    mmwrite(path, sp.coo_matrix(A), comment=comment)
