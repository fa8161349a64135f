"""Reference solvers used for cross-validation.

Two independent discretisations of the same models:

* rusanov_step: a fully explicit collocated scheme whose convective part
  uses the Rusanov (local Lax-Friedrichs) interface flux on the
  pressureless conserved variables, followed by the nonlinear Poisson
  solve and a centered electrostatic source.  First order, diffusive,
  and positivity-fragile, but structurally unrelated to the staggered
  stepper, which makes it a useful referee.

* ice_step: the semi-implicit staggered scheme for the quasineutral
  limit system (isothermal Euler with unit sound speed).  It reuses the
  staggered machinery with the potential replaced by log-density and the
  pressure gradient written in the shifted form that the limit of the
  main scheme produces, so one step with eps = 0 injected into the main
  scheme must reproduce it to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .apscheme import (PositivityError, SchemeConfig, State, _dual_convection,
                       compute_dt, eta_field, implicit_potential_solve,
                       mass_fluxes, mass_update)
from .discops import divergence, gradient, interface_density
from .mesh import (Array, BCSide, BoundarySpec, FaceField, MacMesh, VarBC,
                   apply_velocity_bc, cell_center_grid, dual_average)


@dataclass
class CollocatedState:
    """Cell-centered unknowns of the explicit reference scheme."""

    t: float
    rho: Array
    vel: tuple[Array, ...]
    phi: Array

    def copy(self) -> "CollocatedState":
        return CollocatedState(t=self.t, rho=self.rho.copy(),
                               vel=tuple(v.copy() for v in self.vel),
                               phi=self.phi.copy())


@dataclass
class IceState:
    """Unknowns of the quasineutral-limit scheme."""

    t: float
    rho: Array
    u: FaceField

    def copy(self) -> "IceState":
        return IceState(t=self.t, rho=self.rho.copy(), u=self.u.copy())


def _neumann_bc(dim: int) -> VarBC:
    side = BCSide("neumann_zero")
    return tuple((side, side) for _ in range(dim))


def ice_config(config: SchemeConfig, dim: int) -> SchemeConfig:
    """Internal configuration driving the shared staggered machinery for
    the limit scheme: eps = 0 and a Neumann stand-in for the potential
    (the log-density gradient never touches external faces)."""
    bc = BoundarySpec(density=config.bc.density, velocity=config.bc.velocity,
                      potential=_neumann_bc(dim))
    return replace(config, eps=0.0, bc=bc)


# ---------------------------------------------------------------------------
# Collocated explicit Rusanov scheme
# ---------------------------------------------------------------------------


def _ghost_cells(q: Array, axis: int, bc_side, side: int, odd: bool) -> Array:
    """Ghost layer for one side of one axis; odd selects sign mirroring
    (velocity at a wall)."""
    edge = np.take(q, 0 if side == 0 else -1, axis=axis)
    kind = bc_side.kind
    if kind == "periodic":
        ghost = np.take(q, -1 if side == 0 else 0, axis=axis)
    elif kind == "dirichlet":
        ghost = 2.0 * bc_side.value - edge
    elif kind == "no_slip":
        ghost = -edge if odd else edge
    else:
        ghost = edge
    return np.expand_dims(ghost, axis)


def _padded(q: Array, axis: int, bc_pair, odd: bool) -> Array:
    lo = _ghost_cells(q, axis, bc_pair[0], 0, odd)
    hi = _ghost_cells(q, axis, bc_pair[1], 1, odd)
    return np.concatenate([lo, q, hi], axis=axis)


def _collocated_gradient(phi: Array, mesh: MacMesh, bc: VarBC) -> list[Array]:
    """Centered cell gradient using one ghost layer per side."""
    out = []
    for axis in range(mesh.dim):
        pg = _padded(phi, axis, bc[axis], odd=False)
        c = mesh.centers[axis]
        w = mesh.widths[axis]
        cg = np.concatenate([[c[0] - w[0]], c, [c[-1] + w[-1]]])
        span = cg[2:] - cg[:-2]
        span = span.reshape([-1 if a == axis else 1
                             for a in range(mesh.dim)])
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out.append((pg[tuple(hi)] - pg[tuple(lo)]) / span)
    return out


def rusanov_dt(state: CollocatedState, config: SchemeConfig,
               mesh: MacMesh) -> float:
    """Explicit step bound theta_cfl * min h / max wave speed."""
    speed = 1.0
    for v in state.vel:
        speed = max(speed, float(np.max(np.abs(v))) + 1.0)
    h = min(float(np.min(w)) for w in mesh.widths)
    return config.theta_cfl * h / speed


def rusanov_step(state: CollocatedState, dt: float, config: SchemeConfig,
                 mesh: MacMesh) -> CollocatedState:
    """One explicit step: Rusanov convection, Poisson solve, centered
    electrostatic source."""
    from .pbsolver import EllipticProblem, solve_pb

    dim = mesh.dim
    rho = state.rho
    cons = [rho] + [rho * v for v in state.vel]
    new = [c.copy() for c in cons]

    for axis in range(dim):
        rho_g = _padded(rho, axis, config.bc.density[axis], odd=False)
        vel_g = [
            _padded(state.vel[b], axis, config.bc.velocity[axis],
                    odd=(b == axis))
            for b in range(dim)
        ]
        cons_g = [rho_g] + [rho_g * vg for vg in vel_g]
        un = vel_g[axis]
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        lam = np.maximum(np.abs(un[lo]), np.abs(un[hi])) + 1.0
        area = mesh.face_area[axis]
        flux_div = []
        for wg in cons_g:
            # Physical flux of the pressureless system along this axis.
            f = wg * un
            face = 0.5 * (f[lo] + f[hi]) - 0.5 * lam * (wg[hi] - wg[lo])
            face = area * face
            flo = [slice(None)] * dim
            fhi = [slice(None)] * dim
            flo[axis] = slice(0, -1)
            fhi[axis] = slice(1, None)
            flux_div.append(face[tuple(fhi)] - face[tuple(flo)])
        for comp in range(dim + 1):
            new[comp] = new[comp] - (dt / mesh.cell_vol) * flux_div[comp]

    rho_new = new[0]
    if np.any(rho_new <= 0.0) or not np.all(np.isfinite(rho_new)):
        worst = np.unravel_index(int(np.argmin(rho_new)), mesh.shape)
        raise PositivityError(
            f"explicit reference lost density positivity at cell {worst}")

    coeff = FaceField(tuple(np.full(mesh.face_shape(a), config.eps ** 2)
                            for a in range(dim)))
    problem = EllipticProblem(
        mesh=mesh, coeff=coeff, rhs=rho_new, bc=config.bc.potential,
        newton_tol=config.newton_tol, linear_rtol=config.linear_rtol,
        max_newton=config.max_newton, max_picard=config.max_picard)
    phi_new = solve_pb(problem, phi_init=state.phi)

    grad = _collocated_gradient(phi_new, mesh, config.bc.potential)
    vel_new = tuple((new[1 + a] - dt * rho_new * grad[a]) / rho_new
                    for a in range(dim))
    return CollocatedState(t=state.t + dt, rho=rho_new, vel=vel_new,
                           phi=phi_new)


def project_collocated(mesh: MacMesh, rho0, u0, eps: float,
                       bc: BoundarySpec, newton_tol: float = 1e-10,
                       phi0=None) -> CollocatedState:
    """Sample initial data at cell centers and solve for the potential."""
    from .pbsolver import EllipticProblem, solve_pb

    grid = cell_center_grid(mesh)
    rho = np.broadcast_to(np.asarray(rho0(*grid), dtype=float),
                          mesh.shape).copy()
    if callable(u0):
        u0 = (u0,)
    vel = tuple(np.broadcast_to(np.asarray(u0[a](*grid), dtype=float),
                                mesh.shape).copy()
                for a in range(mesh.dim))
    if phi0 is not None:
        phi = np.broadcast_to(np.asarray(phi0(*grid), dtype=float),
                              mesh.shape).copy()
    else:
        coeff = FaceField(tuple(np.full(mesh.face_shape(a), eps * eps)
                                for a in range(mesh.dim)))
        phi = solve_pb(EllipticProblem(mesh=mesh, coeff=coeff, rhs=rho,
                                       bc=bc.potential,
                                       newton_tol=newton_tol))
    return CollocatedState(t=0.0, rho=rho, vel=vel, phi=phi)


# ---------------------------------------------------------------------------
# Semi-implicit quasineutral-limit scheme
# ---------------------------------------------------------------------------


def ice_dt(state: IceState, config: SchemeConfig, mesh: MacMesh) -> float:
    """Time-step rule of the main scheme with log-density as potential."""
    cfg = ice_config(config, mesh.dim)
    proxy = State(t=state.t, rho=state.rho, u=state.u, phi=np.log(state.rho))
    return compute_dt(proxy, proxy.phi, cfg, mesh)


def ice_step(state: IceState, dt: float, config: SchemeConfig,
             mesh: MacMesh) -> IceState:
    """One semi-implicit step of the limit scheme.

    The implicit stage solves
        -(div(eta dt^2 grad(ln rho_new)))_K + rho_new = rho - dt div(rho_sigma u)
    through the shared elliptic path (eps = 0); the momentum stage uses
    the shifted pressure gradient

        (grad rho_new)* = grad(rho_new)
                          - (rho_new_sigma - rho_sigma) grad(ln rho_new)
                          - dt grad(div u).
    """
    cfg = ice_config(config, mesh.dim)
    proxy = State(t=state.t, rho=state.rho, u=state.u, phi=np.log(state.rho))
    rho_sigma = interface_density(state.rho, mesh, state.u, cfg.donor_cap)
    rho_dual = dual_average(state.rho, mesh)
    eta = eta_field(state.rho, rho_sigma, rho_dual, cfg.gamma)

    log_rho_new = implicit_potential_solve(proxy, dt, eta, cfg, mesh,
                                           rho_sigma)
    fluxes = mass_fluxes(proxy, log_rho_new, eta, dt, cfg, mesh, rho_sigma)
    rho_new = mass_update(proxy, log_rho_new, eta, dt, cfg, mesh, fluxes)

    rho_d_new = dual_average(rho_new, mesh)
    rho_sig_new = interface_density(rho_new, mesh)
    grad_rho = gradient(rho_new, mesh, cfg.bc.potential)
    grad_log = gradient(log_rho_new, mesh, cfg.bc.potential)
    lam = dt * divergence(state.u, mesh)
    grad_lam = gradient(lam, mesh, cfg.bc.potential)

    out = state.u.copy()
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        conv = _dual_convection(state.u[axis], fluxes.dual[axis], mesh, axis)
        dv = mesh.dual_vol[axis][sel]
        starred = (grad_rho[axis][sel]
                   - (rho_sig_new[axis][sel] - rho_sigma[axis][sel])
                   * grad_log[axis][sel]
                   - grad_lam[axis][sel])
        num = (rho_dual[axis][sel] * state.u[axis][sel]
               - (dt / dv) * conv
               - dt * starred)
        out[axis][sel] = num / rho_d_new[axis][sel]
    apply_velocity_bc(out, mesh, cfg.bc.velocity)
    return IceState(t=state.t + dt, rho=rho_new, u=out)
