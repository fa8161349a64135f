"""Discrete differential operators on MAC grids.

Gradient, divergence and Laplacian are the mutually dual first-order
operators of the finite-volume discretisation: the gradient of a cell
field lives on faces, the divergence of a face field lives on cells, and
the Laplacian is their composition.  The module also provides the
logarithmic-mean interface density, the unique face value rho_sigma with

    rho_K - rho_L = rho_sigma * (ln rho_K - ln rho_L),

which turns the potential gradient into a conservative pressure gradient
in the quasineutral limit.
"""

from __future__ import annotations

import numpy as np

from .mesh import Array, FaceField, MacMesh, VarBC

#: Relative separation below which the logarithmic mean switches to its
#: second-order expansion to avoid catastrophic cancellation.
LOG_MEAN_SWITCH = 1e-8


def _adjacent(q: Array, mesh: MacMesh, axis: int) -> tuple[Array, Array]:
    """Cell values left/right of the interior faces of one family."""
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return q[tuple(lo)], q[tuple(hi)]


def half_distance(mesh: MacMesh, axis: int) -> Array:
    """Per-face distance |D_sigma| / |sigma| along the face axis."""
    return mesh.dual_vol[axis] / mesh.face_area[axis]


def gradient(q: Array, mesh: MacMesh, bc: VarBC) -> FaceField:
    """Discrete gradient of a cell field, one face array per axis.

    Interior faces carry (q_L - q_K) divided by the center-to-center
    distance, oriented along the positive axis.  External faces follow the
    boundary condition: zero for neumann_zero and extrapolate_zero_order,
    a half-cell one-sided difference against the boundary value for
    dirichlet, and the wraparound difference for periodic (stored
    identically on both end faces, which represent the same face).
    """
    q = np.asarray(q, dtype=float)
    comps = []
    for axis in range(mesh.dim):
        g = np.zeros(mesh.face_shape(axis))
        dist = half_distance(mesh, axis)
        qk, ql = _adjacent(q, mesh, axis)
        g[mesh.interior_faces(axis)] = (ql - qk) / dist[mesh.interior_faces(axis)]
        lo_kind = bc[axis][0].kind
        if lo_kind == "periodic":
            first = np.take(q, 0, axis=axis)
            last = np.take(q, -1, axis=axis)
            w = mesh.widths[axis]
            wrap_dist = 0.5 * (w[0] + w[-1])
            g[mesh.boundary_faces(axis, 0)] = (first - last) / wrap_dist
            g[mesh.boundary_faces(axis, 1)] = (first - last) / wrap_dist
            comps.append(g)
            continue
        for side in (0, 1):
            kind = bc[axis][side].kind
            target = mesh.boundary_faces(axis, side)
            if kind == "dirichlet":
                qb = bc[axis][side].value
                qc = np.take(q, 0 if side == 0 else -1, axis=axis)
                d = dist[target]
                g[target] = (qc - qb) / d if side == 0 else (qb - qc) / d
            # neumann_zero / extrapolate_zero_order / no_slip: zero gradient.
        comps.append(g)
    return FaceField(comps)


def divergence(v: FaceField, mesh: MacMesh) -> Array:
    """Discrete divergence of a face field: outward face sums over |K|."""
    div = np.zeros(mesh.shape)
    for axis in range(mesh.dim):
        flux = mesh.face_area[axis] * v[axis]
        div += np.diff(flux, axis=axis)
    return div / mesh.cell_vol


def laplacian(q: Array, mesh: MacMesh, bc: VarBC,
              coeff: FaceField | None = None) -> Array:
    """Discrete (coefficient-weighted) Laplacian div(coeff * grad q).

    The coefficient, when given, must be positive on every face that
    enters the stencil (interior faces, periodic wrap faces and dirichlet
    external faces).
    """
    g = gradient(q, mesh, bc)
    if coeff is None:
        return divergence(g, mesh)
    comps = []
    for axis in range(mesh.dim):
        c = np.asarray(coeff[axis], dtype=float)
        active = np.zeros(mesh.face_shape(axis), dtype=bool)
        active[mesh.interior_faces(axis)] = True
        if bc[axis][0].kind == "periodic":
            active[mesh.boundary_faces(axis, 0)] = True
            active[mesh.boundary_faces(axis, 1)] = True
        for side in (0, 1):
            if bc[axis][side].kind == "dirichlet":
                active[mesh.boundary_faces(axis, side)] = True
        if np.any(c[active] <= 0.0):
            raise ValueError("diffusion coefficient must be positive on faces")
        comps.append(c * g[axis])
    return divergence(FaceField(comps), mesh)


def duality_residual(q: Array, v: FaceField, mesh: MacMesh) -> float:
    """Defect of the gradient-divergence duality for v vanishing on
    external faces:  sum |K| q (div v)_K + sum |D| (grad q)_sigma v_sigma.

    Accumulated per face so the two contributions of each interior face
    cancel before summation; a constant q gives exactly zero.
    """
    q = np.asarray(q, dtype=float)
    total = 0.0
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        qk, ql = _adjacent(q, mesh, axis)
        grad = (ql - qk) / half_distance(mesh, axis)[sel]
        area = mesh.face_area[axis][sel]
        defect = (area * (qk - ql)
                  + mesh.dual_vol[axis][sel] * grad) * v[axis][sel]
        total += float(np.sum(defect))
        # External faces only enter the divergence integral.
        for side in (0, 1):
            bsel = mesh.boundary_faces(axis, side)
            q_adj = np.take(q, 0 if side == 0 else -1, axis=axis)
            sign = 1.0 if side == 1 else -1.0
            total += sign * float(np.sum(mesh.face_area[axis][bsel]
                                         * v[axis][bsel] * q_adj))
    return total


def log_mean(a, b):
    """Logarithmic mean (a - b) / (ln a - ln b), elementwise, for a, b > 0.

    Near-equal arguments switch to the second-order expansion
    m - d^2/(12 m) about the arithmetic mean m, which preserves the
    defining identity to round-off without 0/0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise ValueError("log_mean requires strictly positive arguments")
    a, b = np.broadcast_arrays(a, b)
    m = 0.5 * (a + b)
    d = a - b
    out = np.empty_like(m)
    near = np.abs(d) <= LOG_MEAN_SWITCH * np.maximum(a, b)
    far = ~near
    out[far] = d[far] / (np.log(a[far]) - np.log(b[far]))
    out[near] = m[near] - d[near] * d[near] / (12.0 * m[near])
    if out.ndim == 0:
        return float(out)
    return out


def interface_density(rho: Array, mesh: MacMesh, u: FaceField | None = None,
                      donor_cap: float | None = None) -> FaceField:
    """Logarithmic-mean density per interior face; adjacent cell value on
    external faces (callers override those by the active flux BCs).

    When a face velocity and a donor_cap are given, interior values are
    additionally bounded by donor_cap times the upwind cell's density.
    Across a strong contrast the logarithmic mean stays near the large
    side divided by the log of the ratio, so the unbounded mean drains a
    nearly empty cell at a rate set by its full neighbour; the bound
    keeps such faces from emptying the donor cell in finite time while
    leaving moderate contrasts untouched."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("interface density requires a positive density")
    comps = []
    for axis in range(mesh.dim):
        face = np.empty(mesh.face_shape(axis))
        rk, rl = _adjacent(rho, mesh, axis)
        mean = log_mean(rk, rl)
        if donor_cap is not None and u is not None:
            u_int = u[axis][mesh.interior_faces(axis)]
            donor = np.where(u_int > 0.0, rk,
                             np.where(u_int < 0.0, rl, np.minimum(rk, rl)))
            mean = np.minimum(mean, donor_cap * donor)
        face[mesh.interior_faces(axis)] = mean
        face[mesh.boundary_faces(axis, 0)] = np.take(rho, 0, axis=axis)
        face[mesh.boundary_faces(axis, 1)] = np.take(rho, -1, axis=axis)
        comps.append(face)
    return FaceField(comps)
