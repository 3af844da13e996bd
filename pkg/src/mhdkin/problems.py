"""Benchmark problem definitions on the unit cube.

Each problem packages physical parameters, source terms, the prescribed
velocity, boundary data, and (for the manufactured cases) the exact fields.
All field callables are vectorized: they map an (N, 3) point array to (N, 3)
vectors or (N,) scalars.

The two precision tests share the analytic solution
    J = (sin y, 0, x^2),  phi = z,  A = (0, cos x, 0),  r = 0,
with sources manufactured for arbitrary sigma and Rm.  The performance test
drives a vortex sheet past a uniform applied field with PEC boundary
conditions; its current and induction are pure reaction fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

VectorField = Callable[[np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray], np.ndarray]


@dataclass
class ProblemSpec:
    """One solvable configuration of the kinematics system."""

    name: str
    sigma: float
    rm: float
    f: VectorField
    g: VectorField
    w: VectorField | None = None
    phi_w: ScalarField | None = None     # Dirichlet data of the potential (rhs only)
    A_w: VectorField | None = None       # tangential trace data of the vector potential
    exact_J: VectorField | None = None
    exact_phi: ScalarField | None = None
    exact_A: VectorField | None = None
    exact_B: VectorField | None = None

    @property
    def eta(self) -> float:
        return 1.0 / self.sigma

    @property
    def nu_m(self) -> float:
        return 1.0 / self.rm


def _exact_J(p):
    x, y, z = p.T
    return np.column_stack([np.sin(y), np.zeros_like(x), x * x])


def _exact_phi(p):
    return p[:, 2].copy()


def _exact_A(p):
    x = p[:, 0]
    return np.column_stack([np.zeros_like(x), np.cos(x), np.zeros_like(x)])


def _exact_B(p):
    # curl (0, cos x, 0)
    x = p[:, 0]
    return np.column_stack([np.zeros_like(x), np.zeros_like(x), -np.sin(x)])


def _manufactured(name: str, sigma: float, rm: float, w: VectorField | None) -> ProblemSpec:
    eta, nu_m = 1.0 / sigma, 1.0 / rm

    def f(p):
        # eta J + grad phi - w x curl A
        val = eta * _exact_J(p)
        val[:, 2] += 1.0
        if w is not None:
            val -= np.cross(w(p), _exact_B(p))
        return val

    def g(p):
        # -J + nu_m curl curl A;  curl B = (0, cos x, 0)
        x = p[:, 0]
        val = -_exact_J(p)
        val[:, 1] += nu_m * np.cos(x)
        return val

    return ProblemSpec(
        name=name, sigma=sigma, rm=rm, f=f, g=g, w=w,
        phi_w=_exact_phi, A_w=_exact_A,
        exact_J=_exact_J, exact_phi=_exact_phi, exact_A=_exact_A, exact_B=_exact_B,
    )


def example1(sigma: float = 1.0, rm: float = 1.0) -> ProblemSpec:
    """Precision test with zero velocity (decoupled Darcy + curl-curl parts)."""
    return _manufactured("example1", sigma, rm, None)


def example2(sigma: float = 1.0, rm: float = 1.0) -> ProblemSpec:
    """Precision test with velocity w = (x, y, z) coupling the blocks."""

    def w(p):
        return p.copy()

    return _manufactured("example2", sigma, rm, w)


def _vortex_w(p):
    x, y = p[:, 0], p[:, 1]
    amp = 16.0 * x * (1.0 - x) * y * (1.0 - y)
    r2 = x * x + y * y
    safe = r2 >= 1e-28
    inv_r = np.zeros_like(x)
    inv_r[safe] = 1.0 / np.sqrt(r2[safe])
    # unit azimuthal direction (-sin theta, cos theta, 0) about the z axis
    return np.column_stack([-amp * y * inv_r, amp * x * inv_r, np.zeros_like(x)])


def example3(sigma: float = 1.0, rm: float = 1.0) -> ProblemSpec:
    """Preconditioner performance test: rotating channel flow, PEC walls.

    A uniform applied field B_s = (1, 0, 0) enters via f = w x B_s; the
    applied part is curl-free so g = 0.  Boundary data are homogeneous.
    """
    A_s, f_term = lift_applied_field(np.array([1.0, 0.0, 0.0]))

    def f(p):
        return f_term(_vortex_w(p))

    def g(p):
        return np.zeros_like(p)

    return ProblemSpec(name="example3", sigma=sigma, rm=rm, f=f, g=g, w=_vortex_w)


def lift_applied_field(B_s) -> tuple[VectorField, Callable[[np.ndarray], np.ndarray]]:
    """Lift a uniform applied induction into the source terms.

    Returns ``(A_s, f_term)`` where A_s is a vector potential with
    curl A_s = B_s exactly and ``f_term`` maps velocity samples w(x) to the
    induced source w(x) x B_s.  Only constant fields are supported; for a
    constant field curl B_s = 0, so no g contribution arises.
    """
    if callable(B_s):
        raise ValueError("lift_applied_field supports only a constant applied field")
    b = np.asarray(B_s, dtype=float)
    if b.shape != (3,):
        raise ValueError("applied field must be a 3-vector")

    def A_s(p):
        x, y, z = p.T
        return np.column_stack([b[1] * z, b[2] * x, b[0] * y])

    def f_term(w_values: np.ndarray) -> np.ndarray:
        return np.cross(np.asarray(w_values, dtype=float), b)

    return A_s, f_term


EXAMPLES = {"1": example1, "2": example2, "3": example3}


def get_example(key: str, sigma: float = 1.0, rm: float = 1.0) -> ProblemSpec:
    if str(key) not in EXAMPLES:
        raise KeyError(f"unknown example {key!r}; choose one of {sorted(EXAMPLES)}")
    return EXAMPLES[str(key)](sigma=sigma, rm=rm)
