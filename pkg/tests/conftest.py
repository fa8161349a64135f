"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from qnepb.apscheme import SchemeConfig, State, step
from qnepb.mesh import BoundarySpec, FaceField, build_mesh, project_initial


@pytest.fixture
def rng():
    return np.random.default_rng(20250814)


def closed_bc(dim: int) -> BoundarySpec:
    """Neumann density/potential with no-slip walls: a closed box."""
    return BoundarySpec.make(dim, density="neumann_zero",
                             velocity="no_slip", potential="neumann_zero")


def periodic_phi_bc(dim: int) -> BoundarySpec:
    return BoundarySpec.make(dim, density="neumann_zero",
                             velocity="neumann_zero", potential="periodic")


def line_mesh(n: int = 16, lo: float = 0.0, hi: float = 1.0):
    return build_mesh(((lo, hi),), (n,))


def box_mesh(nx: int = 8, ny: int = 6):
    return build_mesh(((0.0, 1.0), (0.0, 1.5)), (nx, ny))


def random_state(mesh, rng, rho_span=(0.5, 2.0), u_span=1.0) -> State:
    """Positive density, interior-face velocity, consistent potential."""
    rho = rng.uniform(*rho_span, size=mesh.shape)
    u = FaceField.zeros(mesh)
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        u[axis][sel] = rng.uniform(-u_span, u_span,
                                   size=u[axis][sel].shape)
    return State(t=0.0, rho=rho, u=u, phi=np.log(rho))


def random_interior_face_field(mesh, rng, span=1.0) -> FaceField:
    """Zero on external faces, random in the interior."""
    v = FaceField.zeros(mesh)
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        v[axis][sel] = rng.uniform(-span, span, size=v[axis][sel].shape)
    return v


def advance_to(state: State, mesh, config: SchemeConfig, t_final: float,
               on_step=None) -> State:
    """March with the automatic step until t_final is reached exactly."""
    t_tol = 1e-12 * max(1.0, t_final)
    while t_final - state.t > t_tol:
        state, diag = step(state, mesh, config, dt_cap=t_final - state.t)
        if on_step is not None:
            on_step(state, diag)
    return state


def project_case(spec, mesh=None):
    """Initial state of a benchmark case on its default or a given mesh."""
    if mesh is None:
        mesh = build_mesh(spec.bounds, spec.cells)
    state = project_initial(mesh, spec.rho0, spec.u0, spec.bc, spec.eps,
                            phi0=spec.phi0)
    return state, mesh


def l1_error(a, b, weights) -> float:
    return float(np.sum(np.abs(a - b) * weights))
