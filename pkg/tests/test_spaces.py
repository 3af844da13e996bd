"""FE space oracles: duality, continuity, reproduction, constraints.

The vector-family checks exercise the documented DOF functionals (face
normal moments / edge tangential moments) as independent probes of the
constructed bases: applying all functionals to any basis function must give
a Kronecker delta, and interpolation must reproduce every linear field.
"""

import numpy as np
import pytest

from mhdkin.mesh import build_cube_mesh
from mhdkin.spaces import (
    FieldFunction,
    SpaceFamily,
    build_space,
    constrained_dofs,
    eval_basis,
    eval_field_at_points,
    eval_field_on_cells,
    interpolate,
    tabulate_curl,
    tabulate_div,
)


def _ref_coords(mesh, cell, x):
    return mesh.inv_jacobians[cell] @ (x - mesh.cell_coords[cell, 0])


@pytest.mark.parametrize("family", [SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2])
def test_kronecker_duality(family):
    # applying DOF functional i to basis function j yields delta_ij
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, family)
    rng = np.random.default_rng(3)
    probe = rng.choice(dm.num_dofs, size=25, replace=False)
    for j in probe:
        e = np.zeros(dm.num_dofs)
        e[j] = 1.0
        basis_j = FieldFunction(dm, e)
        got = interpolate(dm, lambda pts: eval_field_at_points(basis_j, pts))
        err = got.coefficients - e
        assert np.max(np.abs(err)) < 1e-12


@pytest.mark.parametrize("family", [SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2])
def test_trace_continuity(family):
    # H(div): normal component continuous across interior faces;
    # edge family: tangential component continuous.
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, family)
    rng = np.random.default_rng(11)
    coeffs = rng.standard_normal(dm.num_dofs)
    interior = np.where(~mesh.boundary_face_mask)[0]
    for f in interior[:: max(1, interior.size // 24)]:
        c1, c2 = mesh.face_cells[f]
        lam = rng.dirichlet(np.ones(3), size=4)
        pts = lam @ mesh.vertices[mesh.faces[f]]
        n = mesh.face_normals[f]
        vals = []
        for c in (c1, c2):
            xi = np.array([_ref_coords(mesh, c, x) for x in pts])
            basis, _ = eval_basis(dm, c, xi)
            vals.append(np.einsum("qjd,j->qd", basis, coeffs[dm.cell_dofs[c]]))
        jump = vals[0] - vals[1]
        if family is SpaceFamily.HDIV_LINEAR:
            assert np.max(np.abs(jump @ n)) < 1e-12
        else:
            tang = jump - np.outer(jump @ n, n)
            assert np.max(np.abs(tang)) < 1e-12


@pytest.mark.parametrize("family", [SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2])
def test_linear_field_reproduction(family):
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, family)

    def lin(p):
        x, y, z = p.T
        return np.column_stack([x + 2 * y - z + 1, 3 * x - y, z + 4 * x - 2])

    f = interpolate(dm, lin)
    rng = np.random.default_rng(5)
    pts = rng.random((60, 3))
    assert np.max(np.abs(eval_field_at_points(f, pts) - lin(pts))) < 1e-12


def test_div_of_interpolated_identity_field():
    # div(x, 0, 0) = 1 on every cell
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, SpaceFamily.HDIV_LINEAR)
    f = interpolate(dm, lambda p: np.column_stack([p[:, 0], 0 * p[:, 0], 0 * p[:, 0]]))
    divs = np.einsum("cj,cj->c", tabulate_div(dm), f.coefficients[dm.cell_dofs])
    assert np.max(np.abs(divs - 1.0)) < 1e-12


def test_curl_of_interpolated_shear_field():
    # curl(0, 0, y) = (1, 0, 0) on every cell
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, SpaceFamily.HCURL_NEDELEC2)
    f = interpolate(dm, lambda p: np.column_stack([0 * p[:, 0], 0 * p[:, 0], p[:, 1]]))
    curls = np.einsum("cjd,cj->cd", tabulate_curl(dm), f.coefficients[dm.cell_dofs])
    assert np.max(np.abs(curls - np.array([1.0, 0.0, 0.0]))) < 1e-12


@pytest.mark.parametrize("family", [SpaceFamily.HDIV_LINEAR, SpaceFamily.HCURL_NEDELEC2])
def test_derivatives_match_finite_differences(family):
    # members are linear in x, so central differences are exact
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, family)
    c = 17
    x0 = np.array([[0.25, 0.25, 0.25]])
    h = 1e-4
    J, Jinv = mesh.jacobians[c], mesh.inv_jacobians[c]
    xc = mesh.cell_coords[c, 0] + J @ x0[0]
    partial = np.empty((3, 12, 3))
    for d in range(3):
        xp = xc + h * np.eye(3)[d]
        xm = xc - h * np.eye(3)[d]
        bp, _ = eval_basis(dm, c, (Jinv @ (xp - mesh.cell_coords[c, 0]))[None, :])
        bm, _ = eval_basis(dm, c, (Jinv @ (xm - mesh.cell_coords[c, 0]))[None, :])
        partial[d] = (bp[0] - bm[0]) / (2 * h)
    _, deriv = eval_basis(dm, c, x0)
    if family is SpaceFamily.HDIV_LINEAR:
        fd = partial[0, :, 0] + partial[1, :, 1] + partial[2, :, 2]
    else:
        fd = np.column_stack([
            partial[1, :, 2] - partial[2, :, 1],
            partial[2, :, 0] - partial[0, :, 2],
            partial[0, :, 1] - partial[1, :, 0],
        ])
    assert np.max(np.abs(fd - deriv)) < 1e-8


def test_p2_gradient_inclusion_in_edge_space():
    # gradients of P2 functions interpolate exactly into the edge space
    mesh = build_cube_mesh(2)
    ch = build_space(mesh, SpaceFamily.HCURL_NEDELEC2)

    def gradp(p):
        x, y, z = p.T
        return np.column_stack([2 * x + 2 * y + 1, 2 * x, 2 * z - 3])

    f = interpolate(ch, gradp)
    rng = np.random.default_rng(9)
    pts = rng.random((50, 3))
    assert np.max(np.abs(eval_field_at_points(f, pts) - gradp(pts))) < 1e-12


def test_p2_reproduces_quadratics():
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, SpaceFamily.H1_P2)

    def q(p):
        x, y, z = p.T
        return x * x + 2 * x * y + z * z - y + 0.5

    f = interpolate(dm, q)
    rng = np.random.default_rng(2)
    pts = rng.random((60, 3))
    assert np.max(np.abs(eval_field_at_points(f, pts) - q(pts))) < 1e-12


def test_p0_cell_averages():
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, SpaceFamily.L2_CONSTANT)
    # average of an affine function is its centroid value
    f = interpolate(dm, lambda p: 2 * p[:, 0] - p[:, 2] + 1)
    cent = mesh.cell_coords.mean(axis=1)
    assert np.max(np.abs(f.coefficients - (2 * cent[:, 0] - cent[:, 2] + 1))) < 1e-13


def test_dof_counts():
    # DOF formulas on the lattice meshes: 3(12n^3+6n^2), 6n^3, 2E, V+E
    for n in (1, 2, 4):
        mesh = build_cube_mesh(n)
        assert build_space(mesh, SpaceFamily.HDIV_LINEAR).num_dofs == 3 * (12 * n**3 + 6 * n**2)
        assert build_space(mesh, SpaceFamily.L2_CONSTANT).num_dofs == 6 * n**3
        assert build_space(mesh, SpaceFamily.HCURL_NEDELEC2).num_dofs == 2 * mesh.num_edges
        assert build_space(mesh, SpaceFamily.H1_P2).num_dofs == mesh.num_vertices + mesh.num_edges


def test_constrained_dof_counts_and_values():
    mesh = build_cube_mesh(2)
    ch = constrained_dofs(build_space(mesh, SpaceFamily.HCURL_NEDELEC2))
    assert ch.constrained_idx.size == 144          # 2 x 72 boundary edges
    assert np.all(ch.constrained_val == 0.0)
    rh = constrained_dofs(build_space(mesh, SpaceFamily.H1_P2))
    assert rh.constrained_idx.size == 98           # 26 boundary vertices + 72 edges
    # nonzero data: constrained values equal the interpolant on the boundary
    data = lambda p: np.column_stack([p[:, 2], p[:, 0], 0 * p[:, 0]])
    ch2 = constrained_dofs(build_space(mesh, SpaceFamily.HCURL_NEDELEC2), data)
    full = interpolate(ch2, data)
    assert np.allclose(ch2.constrained_val, full.coefficients[ch2.constrained_idx])


def test_constraint_errors_and_point_validation():
    mesh = build_cube_mesh(1)
    with pytest.raises(ValueError):
        constrained_dofs(build_space(mesh, SpaceFamily.HDIV_LINEAR))
    with pytest.raises(ValueError):
        constrained_dofs(build_space(mesh, SpaceFamily.L2_CONSTANT))
    dm = build_space(mesh, SpaceFamily.HDIV_LINEAR)
    with pytest.raises(IndexError):
        eval_basis(dm, 99, np.array([[0.1, 0.1, 0.1]]))
    with pytest.raises(ValueError):
        eval_basis(dm, 0, np.array([[0.7, 0.7, 0.7]]))


def test_eval_field_on_cells_matches_pointwise():
    mesh = build_cube_mesh(2)
    dm = build_space(mesh, SpaceFamily.HCURL_NEDELEC2)
    rng = np.random.default_rng(21)
    f = FieldFunction(dm, rng.standard_normal(dm.num_dofs))
    ref = np.array([[0.2, 0.3, 0.1], [0.1, 0.1, 0.6]])
    vals = eval_field_on_cells(f, ref)
    c = 13
    pts = mesh.cell_coords[c, 0] + ref @ mesh.jacobians[c].T
    direct, _ = eval_basis(dm, c, ref)
    expect = np.einsum("qjd,j->qd", direct, f.coefficients[dm.cell_dofs[c]])
    assert np.allclose(vals[c], expect, atol=1e-13)
