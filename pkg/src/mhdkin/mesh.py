"""Conforming tetrahedral meshes of the unit cube.

``build_cube_mesh(n)`` splits an n x n x n lattice of subcubes into six
tetrahedra each: for a permutation ``pi`` of the axes, the tetrahedron
walks from a subcube corner along e_{pi0}, e_{pi1}, e_{pi2}.  Subcube
(i, j, k) uses the walk mirrored in axis d whenever its index along d is
odd, so neighbouring subcubes are mirror images of each other and induce
the same diagonal on every shared square face (the arrangement produced
by uniform bisection refinement of the six-tetrahedra cube).  The mesh is
conforming and every cell has volume 1/(6 n^3).

Conventions (fixed; assembly and the FE spaces rely on them):
  * vertices at lattice (i, j, k) / n with id  i (n+1)^2 + j (n+1) + k,
  * cell vertex tuples ordered so the Jacobian determinant is positive,
  * edges stored as ascending pairs, faces as ascending triples, both
    lexicographically sorted; cells sorted lexicographically by tuple,
  * the global normal of face (a, b, c), a < b < c, is the unit vector
    along (p_b - p_a) x (p_c - p_a); the global tangent of edge (a, b),
    a < b, points from a to b,
  * a face is boundary iff it is incident to exactly one cell; boundary
    edges/vertices are those of boundary faces.
"""

from __future__ import annotations

import itertools
import json

import numpy as np

# local subentities of a tetrahedron (by local vertex index)
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

_REF_GRADS = np.array(
    [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


def _encode_rows(rows: np.ndarray, base: int) -> np.ndarray:
    """Monotone integer key for ascending index tuples (lex order preserved)."""
    key = rows[:, 0].astype(np.int64)
    for j in range(1, rows.shape[1]):
        key = key * base + rows[:, j]
    return key


class Mesh:
    """Tetrahedral mesh with entity tables, orientation data and geometry.

    Parameters
    ----------
    vertices : (V, 3) float array
    cells : (C, 4) int array
        Vertex tuples with positive Jacobian determinant.
    n : int, optional
        Subdivision count when the mesh is a cube lattice mesh; enables
        ``locate``.
    """

    def __init__(self, vertices: np.ndarray, cells: np.ndarray, n: int | None = None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        order = np.lexsort(tuple(cells[:, j] for j in range(3, -1, -1)))
        self.cells = cells[order]
        self.n = n

        V = self.vertices.shape[0]
        C = self.cells.shape[0]

        # geometry: Jacobian columns are (p1-p0, p2-p0, p3-p0)
        self.cell_coords = self.vertices[self.cells]                      # (C,4,3)
        self.jacobians = np.transpose(
            self.cell_coords[:, 1:, :] - self.cell_coords[:, :1, :], (0, 2, 1)
        )                                                                 # (C,3,3)
        self.dets = np.linalg.det(self.jacobians)
        if np.any(self.dets <= 0.0):
            raise ValueError("cells must be positively oriented (det > 0)")
        self.volumes = self.dets / 6.0
        self.inv_jacobians = np.linalg.inv(self.jacobians)
        # physical gradients of the four barycentric coordinates
        self.grad_bary = np.einsum("id,cde->cie", _REF_GRADS, self.inv_jacobians)

        # edge table: unique ascending pairs, lexicographically sorted
        ce = np.sort(self.cells[:, LOCAL_EDGES], axis=2)                  # (C,6,2)
        ekey = _encode_rows(ce.reshape(-1, 2), V)
        ukey, inv = np.unique(ekey, return_inverse=True)
        self.edges = np.column_stack([ukey // V, ukey % V])
        self.cell_to_edges = inv.reshape(C, 6)
        # +1 where the local edge direction agrees with the global (ascending) one
        le = self.cells[:, LOCAL_EDGES]
        self.cell_edge_signs = np.where(le[:, :, 0] < le[:, :, 1], 1, -1)

        # face table
        cf = np.sort(self.cells[:, LOCAL_FACES], axis=2)                  # (C,4,3)
        fkey = _encode_rows(cf.reshape(-1, 3), V)
        ufkey, finv = np.unique(fkey, return_inverse=True)
        self.faces = np.column_stack(
            [ufkey // (V * V), (ufkey // V) % V, ufkey % V]
        )
        self.cell_to_faces = finv.reshape(C, 4)
        # permutation index mapping the sorted (global) face tuple to the local one
        perms = np.array(list(itertools.permutations(range(3))))
        lf = self.cells[:, LOCAL_FACES]                                   # (C,4,3)
        ordr = np.argsort(lf, axis=2)
        pkey = ordr[..., 0] * 4 + ordr[..., 1] * 2 + ordr[..., 2]
        pmap = {p[0] * 4 + p[1] * 2 + p[2]: i for i, p in enumerate(perms)}
        self.face_permutations = np.vectorize(pmap.__getitem__)(pkey)
        self._perms3 = perms

        # face -> incident cells ((F,2), -1 where boundary), ascending cell ids
        F = self.faces.shape[0]
        self.face_cells = np.full((F, 2), -1, dtype=np.int64)
        flat = self.cell_to_faces.ravel()
        cidx = np.repeat(np.arange(C), 4)
        order = np.lexsort((cidx, flat))
        ff, cc = flat[order], cidx[order]
        first = np.ones(ff.size, dtype=bool)
        first[1:] = ff[1:] != ff[:-1]
        self.face_cells[ff[first], 0] = cc[first]
        second = ~first
        self.face_cells[ff[second], 1] = cc[second]

        # global face normals (right-hand rule on ascending vertex order)
        p = self.vertices[self.faces]
        cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        nrm = np.linalg.norm(cr, axis=1)
        self.face_areas = 0.5 * nrm
        self.face_normals = cr / nrm[:, None]

        # boundary flags (topological: faces with one incident cell)
        self.boundary_face_mask = self.face_cells[:, 1] < 0
        bfaces = self.faces[self.boundary_face_mask]
        self.boundary_vertex_mask = np.zeros(V, dtype=bool)
        self.boundary_vertex_mask[bfaces.ravel()] = True
        bpairs = np.sort(bfaces[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2), axis=1)
        bekey = np.unique(_encode_rows(bpairs, V))
        self.boundary_edge_mask = np.zeros(self.edges.shape[0], dtype=bool)
        self.boundary_edge_mask[np.searchsorted(ukey, bekey)] = True

        self._subcube_cells: np.ndarray | None = None

    # -- counts ------------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def summary(self) -> dict:
        """JSON-serializable mesh summary."""
        d = {
            "n": self.n,
            "h": mesh_size(self),
            "counts": {
                "vertices": self.num_vertices,
                "edges": self.num_edges,
                "faces": self.num_faces,
                "cells": self.num_cells,
            },
            "boundary_counts": {
                "vertices": int(self.boundary_vertex_mask.sum()),
                "edges": int(self.boundary_edge_mask.sum()),
                "faces": int(self.boundary_face_mask.sum()),
            },
        }
        json.dumps(d)  # guarantee serializability
        return d

    # -- point location (cube lattice meshes only) -------------------------
    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find containing cells and reference coordinates of points.

        Returns (cells, xi) with xi the reference coordinates such that
        x = p0 + J xi.  Points are clipped to the closed unit cube.
        """
        if self.n is None:
            raise ValueError("locate requires a cube lattice mesh (n known)")
        n = self.n
        if self._subcube_cells is None:
            m = n + 1
            # subcube origin = componentwise minimum lattice corner of the cell
            k = np.min(self.cells % m, axis=1)
            j = np.min((self.cells // m) % m, axis=1)
            i = np.min(self.cells // (m * m), axis=1)
            sub = (i * n + j) * n + k
            order = np.argsort(sub, kind="stable")
            self._subcube_cells = order.reshape(n * n * n, 6)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pc = np.clip(pts, 0.0, 1.0)
        ijk = np.minimum((pc * n).astype(np.int64), n - 1)
        sub = (ijk[:, 0] * n + ijk[:, 1]) * n + ijk[:, 2]
        cand = self._subcube_cells[sub]                                   # (P,6)
        d = pc[:, None, :] - self.cell_coords[cand, 0, :]                 # (P,6,3)
        xi = np.einsum("pkde,pke->pkd", self.inv_jacobians[cand], d)
        bary_min = np.minimum(xi.min(axis=2), 1.0 - xi.sum(axis=2))
        best = np.argmax(bary_min, axis=1)
        rows = np.arange(pts.shape[0])
        return cand[rows, best], xi[rows, best]


def build_cube_mesh(n: int) -> Mesh:
    """Six-tetrahedra-per-subcube mesh of the unit cube, n subdivisions per axis."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    m = n + 1
    ii, jj, kk = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
    vertices = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()]) / float(n)

    # per-permutation lattice offsets of the four path vertices
    unit = np.eye(3, dtype=np.int64)
    cells_per_cube = []
    for perm in itertools.permutations(range(3)):
        offs = np.zeros((4, 3), dtype=np.int64)
        for step, axis in enumerate(perm):
            offs[step + 1] = offs[step] + unit[axis]
        sign = 1
        p = list(perm)
        for a in range(3):
            for b in range(a + 1, 3):
                if p[a] > p[b]:
                    sign = -sign
        if sign < 0:  # restore positive orientation
            offs[[2, 3]] = offs[[3, 2]]
        cells_per_cube.append(offs)
    cells_per_cube = np.array(cells_per_cube)                             # (6,4,3)

    oi, oj, ok = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    origins = np.column_stack([oi.ravel(), oj.ravel(), ok.ravel()])       # (n^3,3)
    # mirror the walk in axis d inside subcubes with odd index along d
    par = (origins % 2)[:, None, None, :]                                 # (n^3,1,1,3)
    offs = np.where(par == 1, 1 - cells_per_cube[None], cells_per_cube[None])
    lat = origins[:, None, None, :] + offs                                # (n^3,6,4,3)
    ids = (lat[..., 0] * m + lat[..., 1]) * m + lat[..., 2]               # (n^3,6,4)
    # each mirrored axis flips orientation; swap last two vertices to restore it
    flip = (origins.sum(axis=1) % 2).astype(bool)
    ids[flip] = ids[flip][:, :, [0, 1, 3, 2]]
    return Mesh(vertices, ids.reshape(-1, 4), n=n)


def mesh_size(mesh: Mesh) -> float:
    """Maximum edge length h."""
    d = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    return float(np.linalg.norm(d, axis=1).max())


def cell_geometry(mesh: Mesh, cell: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Affine map data of one cell: (jacobian, det, inverse transpose)."""
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"cell {cell} out of range")
    J = mesh.jacobians[cell]
    det = float(mesh.dets[cell])
    if det <= 0.0:
        raise ValueError(f"cell {cell} has nonpositive determinant {det}")
    return J, det, mesh.inv_jacobians[cell].T
