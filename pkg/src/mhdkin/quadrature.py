"""Quadrature rules on the reference tetrahedron, triangle, and segment.

Rules are generated by the conical-product (Duffy collapse) construction:
tensor Gauss-Jacobi rules on [0,1]^d are mapped onto the simplex with the
Jacobi weights absorbing the collapse Jacobian.  All weights are strictly
positive and the rules are exact for polynomials up to the declared degree.

Reference domains: tetrahedron conv{0, e1, e2, e3} (measure 1/6), triangle
conv{0, e1, e2} (measure 1/2), segment [0,1] (measure 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

TET_DEGREES = (1, 2, 4, 6)


@dataclass(frozen=True)
class QuadratureRule:
    """Points (Q, dim) and weights (Q,) on a reference domain.

    ``degree`` is the guaranteed polynomial exactness; the generated rule
    may be exact to a slightly higher degree.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self) -> None:
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")


def _gauss_01(m: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre on [-1,1] mapped to [0,1]
    x, w = roots_legendre(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _gauss_jacobi_01(m: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi with weight (1-x)^alpha on [-1,1], mapped to [0,1].
    # The map absorbs the normalization so sum(w) = 1/(alpha+1).
    x, w = roots_jacobi(m, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


def segment_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0,1] exact to at least ``degree``."""
    if degree < 0:
        raise ValueError(f"invalid degree {degree}")
    m = max(1, (degree + 2) // 2)
    x, w = _gauss_01(m)
    return QuadratureRule(x[:, None], w, degree)


def triangle_rule(degree: int) -> QuadratureRule:
    """Conical-product rule on the reference triangle, exact to ``degree``."""
    if degree < 0:
        raise ValueError(f"invalid degree {degree}")
    m = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi_01(m, 1)   # weight (1-u): collapse Jacobian
    v, wv = _gauss_01(m)
    # x = u, y = v(1-u); dx dy = (1-u) du dv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    w = np.outer(wu, wv).ravel()
    return QuadratureRule(pts, w, degree)


def tet_rule(degree: int) -> QuadratureRule:
    """Conical-product rule on the reference tetrahedron.

    Supported degrees: 1, 2, 4, 6 (the set used by assembly, interpolation,
    and error integration).
    """
    if degree not in TET_DEGREES:
        raise ValueError(f"unsupported tetrahedron degree {degree}; supported: {TET_DEGREES}")
    m = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi_01(m, 2)   # weight (1-u)^2
    v, wv = _gauss_jacobi_01(m, 1)   # weight (1-v)
    t, wt = _gauss_01(m)
    # x = u, y = v(1-u), z = t(1-u)(1-v); Jacobian (1-u)^2 (1-v)
    uu, vv, tt = np.meshgrid(u, v, t, indexing="ij")
    x = uu
    y = vv * (1.0 - uu)
    z = tt * (1.0 - uu) * (1.0 - vv)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    w = (wu[:, None, None] * wv[None, :, None] * wt[None, None, :]).ravel()
    return QuadratureRule(pts, w, degree)
