"""Semi-implicit, energy-stable time stepper for the scaled plasma system.

One step advances (rho, u, phi) by

* an implicit nonlinear solve for the new potential, obtained by
  eliminating the new density between the mass balance and the nonlinear
  Poisson equation,
* an explicit conservative mass update whose flux carries a stabilising
  shift Q = eta dt (grad phi) proportional to the new potential gradient,
* an explicit momentum update on dual cells with upwinded convection,
  the electrostatic source -rho_sigma (grad phi), and a stabilising
  source shift grad(Lambda) with Lambda = dt div(u).

The face coefficient eta and the time-step rule make the discrete total
energy non-increasing and keep the density positive.  Velocity unknowns
live on interior faces; external faces only mirror boundary data, so
periodic velocity boundaries are not supported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .diagnostics import total_energy
from .discops import divergence, gradient, interface_density
from .mesh import (Array, BCSide, BoundarySpec, FaceField, MacMesh, VarBC,
                   apply_velocity_bc, dual_average)
from .pbsolver import EllipticProblem, solve_pb

logger = logging.getLogger(__name__)

# Dual density may not drop by more than this factor in one step under
# the sufficient time-step restriction; violations are logged, not fatal.
_DENSITY_RATIO_BOUND = 1.25

# Halvings of an automatically chosen dt before the step is abandoned.
_MAX_STEP_REDO = 40


class PositivityError(RuntimeError):
    """New density lost positivity; signals a violated time-step bound."""


@dataclass
class State:
    """Discrete unknowns at one time level."""

    t: float
    rho: Array
    u: FaceField
    phi: Array

    def copy(self) -> "State":
        return State(t=self.t, rho=self.rho.copy(), u=self.u.copy(),
                     phi=self.phi.copy())


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme parameters and boundary data.

    eps is the scaled screening length; eps = 0 selects the formal
    quasineutral limit of the update (used for limit-consistency checks).
    gamma > 1 is the safety factor on the stabilisation bound, theta_cfl
    the safety factor on the time-step rule.

    donor_cap bounds the interface density by that multiple of the
    upwind cell's density (None disables the bound).  The energy
    inequality holds for any interface density used consistently in the
    flux, the force and eta, so the bound does not weaken it; it guards
    flows with under-resolved fronts, where the unbounded logarithmic
    mean starves cells bordering a strong contrast and collapses the
    time-step rule.  It engages only above density ratios of roughly
    exp(donor_cap), far beyond resolved shock strengths, leaving smooth
    and moderately sharp solutions bit-identical.
    """

    eps: float
    bc: BoundarySpec
    gamma: float = 1.01
    theta_cfl: float = 0.9
    dt_max: float = 0.1
    newton_tol: float = 1e-10
    linear_rtol: float = 1e-12
    max_newton: int = 50
    max_picard: int = 200
    donor_cap: float | None = 8.0

    def __post_init__(self) -> None:
        if self.eps < 0.0:
            raise ValueError("eps must be non-negative")
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if not 0.0 < self.theta_cfl <= 1.0:
            raise ValueError("theta_cfl must lie in (0, 1]")
        if self.dt_max <= 0.0:
            raise ValueError("dt_max must be positive")
        if self.donor_cap is not None and self.donor_cap < 1.0:
            raise ValueError("donor_cap must be at least 1")
        for axis, (lo, hi) in enumerate(self.bc.velocity):
            if lo.kind == "periodic" or hi.kind == "periodic":
                raise ValueError("periodic velocity boundaries are not "
                                 "supported")


@dataclass(frozen=True)
class StabilisationFields:
    """Stabilisation data of one step: eta and the two shifts."""

    eta: FaceField
    q_shift: FaceField
    lam: Array


@dataclass(frozen=True)
class DualFluxes:
    """Dual-cell edge fluxes for one velocity family, area-weighted.

    axial holds one flux per primal cell (the dual edge at the cell
    center, oriented along the family axis).  lateral (2D only) holds the
    transverse dual-edge fluxes on the face-corner lattice, zero on
    external dual edges.
    """

    axial: Array
    lateral: Array | None = None


@dataclass(frozen=True)
class FluxSet:
    """Primal mass fluxes (area-weighted, oriented along +axis) and the
    derived dual-cell fluxes per velocity family."""

    mass: FaceField
    dual: tuple[DualFluxes, ...]


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step monitors recorded by step()."""

    t: float
    dt: float
    mass: float
    min_rho: float
    e_kin: float
    e_boltz: float
    e_field: float
    e_total: float
    qn_residual: float
    boundary_mass_flux: float
    max_density_ratio: float


def _neumann_bc(dim: int) -> VarBC:
    side = BCSide("neumann_zero")
    return tuple((side, side) for _ in range(dim))


def eta_field(rho_n: Array, rho_sigma: FaceField, rho_dual_n: FaceField,
              gamma: float) -> FaceField:
    """Stabilisation coefficient gamma * 5 rho_sigma^2 / (4 rho_dual) on
    interior faces, zero on external faces."""
    if np.any(np.asarray(rho_n) <= 0.0):
        raise ValueError("density must be positive")
    comps = []
    for axis in range(len(rho_sigma)):
        full = np.zeros_like(rho_sigma[axis])
        sel = [slice(None)] * full.ndim
        sel[axis] = slice(1, -1)
        sel = tuple(sel)
        full[sel] = (gamma * 5.0 * rho_sigma[axis][sel] ** 2
                     / (4.0 * rho_dual_n[axis][sel]))
        comps.append(full)
    return FaceField(comps)


def _face_density_with_bc(rho: Array, u: FaceField, mesh: MacMesh,
                          bc_density: VarBC, rho_sigma: FaceField,
                          ) -> FaceField:
    """Interface density for the convective flux: the given interior-face
    values, upwind between the boundary value and the adjacent cell on
    external faces (inflow takes the boundary value)."""
    out = rho_sigma.copy()
    for axis in range(mesh.dim):
        comp = out[axis]
        for side in (0, 1):
            target = mesh.boundary_faces(axis, side)
            cell = np.take(rho, 0 if side == 0 else -1, axis=axis)
            bc = bc_density[axis][side]
            if bc.kind == "dirichlet":
                ghost = np.full_like(cell, bc.value)
            elif bc.kind == "periodic":
                ghost = np.take(rho, -1 if side == 0 else 0, axis=axis)
            else:
                ghost = cell
            u_b = u[axis][target]
            inflow = u_b > 0.0 if side == 0 else u_b < 0.0
            comp[target] = np.where(inflow, ghost, cell)
    return out


def stabilisation_fields(state_n: State, phi_np1: Array, eta: FaceField,
                         dt: float, config: SchemeConfig,
                         mesh: MacMesh) -> StabilisationFields:
    grad_phi = gradient(phi_np1, mesh, config.bc.potential)
    q_shift = FaceField(tuple(eta[a] * dt * grad_phi[a]
                              for a in range(mesh.dim)))
    lam = dt * divergence(state_n.u, mesh)
    return StabilisationFields(eta=eta, q_shift=q_shift, lam=lam)


def _convective_flux(state_n: State, config: SchemeConfig, mesh: MacMesh,
                     rho_sigma: FaceField | None = None) -> FaceField:
    """Explicit convective mass flux |sigma| rho_sigma u per face."""
    if rho_sigma is None:
        rho_sigma = interface_density(state_n.rho, mesh, state_n.u,
                                      config.donor_cap)
    rho_b = _face_density_with_bc(state_n.rho, state_n.u, mesh,
                                  config.bc.density, rho_sigma)
    return FaceField(tuple(mesh.face_area[a] * rho_b[a] * state_n.u[a]
                           for a in range(mesh.dim)))


def implicit_potential_solve(state_n: State, dt: float, eta: FaceField,
                             config: SchemeConfig, mesh: MacMesh,
                             rho_sigma: FaceField | None = None) -> Array:
    """Solve the eliminated nonlinear problem for the new potential:

        -(div((eps^2 + eta dt^2) grad phi))_K + exp(phi_K)
            = rho_K - dt (div(rho_sigma u))_K.
    """
    conv = _convective_flux(state_n, config, mesh, rho_sigma)
    rhs = state_n.rho - dt * _flux_divergence(conv, mesh)
    coeff = FaceField(tuple(config.eps ** 2 + eta[a] * dt * dt
                            for a in range(mesh.dim)))
    problem = EllipticProblem(
        mesh=mesh, coeff=coeff, rhs=rhs, bc=config.bc.potential,
        newton_tol=config.newton_tol, linear_rtol=config.linear_rtol,
        max_newton=config.max_newton, max_picard=config.max_picard)
    return solve_pb(problem, phi_init=state_n.phi)


def _flux_divergence(flux: FaceField, mesh: MacMesh) -> Array:
    """Cell divergence of an area-weighted oriented face flux."""
    out = np.zeros(mesh.shape)
    for axis in range(mesh.dim):
        comp = flux[axis]
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out += comp[tuple(hi)] - comp[tuple(lo)]
    return out / mesh.cell_vol


def mass_fluxes(state_n: State, phi_np1: Array, eta: FaceField, dt: float,
                config: SchemeConfig, mesh: MacMesh,
                rho_sigma: FaceField | None = None) -> FluxSet:
    """Total mass fluxes |sigma|(rho_sigma u - Q) and their dual-cell
    counterparts."""
    conv = _convective_flux(state_n, config, mesh, rho_sigma)
    grad_phi = gradient(phi_np1, mesh, config.bc.potential)
    total = FaceField(tuple(
        conv[a] - mesh.face_area[a] * eta[a] * dt * grad_phi[a]
        for a in range(mesh.dim)))
    dual = tuple(dual_fluxes(total, mesh, axis) for axis in range(mesh.dim))
    return FluxSet(mass=total, dual=dual)


def mass_update(state_n: State, phi_np1: Array, eta: FaceField, dt: float,
                config: SchemeConfig, mesh: MacMesh,
                fluxes: FluxSet | None = None) -> Array:
    """Conservative density update; raises PositivityError on negativity."""
    if fluxes is None:
        fluxes = mass_fluxes(state_n, phi_np1, eta, dt, config, mesh)
    rho_new = state_n.rho - dt * _flux_divergence(fluxes.mass, mesh)
    if np.any(rho_new <= 0.0) or not np.all(np.isfinite(rho_new)):
        worst = np.unravel_index(int(np.argmin(rho_new)), mesh.shape)
        raise PositivityError(
            f"density non-positive at cell {worst} "
            f"(value {rho_new[worst]:.3e}); time step too large")
    return rho_new


def dual_fluxes(primal_fluxes: FaceField, mesh: MacMesh,
                axis: int) -> DualFluxes:
    """Dual-cell edge fluxes for one velocity family.

    Axial dual edges sit at primal cell centers and carry the mean of the
    two cell-face fluxes of that cell.  Lateral (transverse) dual edges
    carry the mean of the two transverse primal fluxes adjacent to the
    edge; dual edges lying on the domain boundary carry zero.
    """
    f = primal_fluxes[axis]
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    axial = 0.5 * (f[tuple(lo)] + f[tuple(hi)])
    if mesh.dim == 1:
        return DualFluxes(axial=axial)
    other = 1 - axis
    g = primal_fluxes[other]
    nx, ny = mesh.shape
    lateral = np.zeros((nx + 1, ny + 1))
    if axis == 0:
        lateral[1:-1, :] = 0.5 * (g[:-1, :] + g[1:, :])
        lateral[:, 0] = 0.0
        lateral[:, -1] = 0.0
    else:
        lateral[:, 1:-1] = 0.5 * (g[:, :-1] + g[:, 1:])
        lateral[0, :] = 0.0
        lateral[-1, :] = 0.0
    return DualFluxes(axial=axial, lateral=lateral)


def _dual_convection(u_comp: Array, dual: DualFluxes, mesh: MacMesh,
                     axis: int) -> Array:
    """Upwinded momentum convection sum over dual-cell edges, evaluated
    on the interior faces of one family."""
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    u_lo = u_comp[tuple(lo)]
    u_hi = u_comp[tuple(hi)]
    t_ax = dual.axial * np.where(dual.axial >= 0.0, u_lo, u_hi)
    conv = t_ax[tuple(hi)] - t_ax[tuple(lo)]  # at interior faces
    if mesh.dim == 1:
        return conv
    nx, ny = mesh.shape
    t_lat = np.zeros_like(dual.lateral)
    if axis == 0:
        lat = dual.lateral[:, 1:-1]
        t_lat[:, 1:-1] = lat * np.where(lat >= 0.0, u_comp[:, :-1],
                                        u_comp[:, 1:])
        conv = conv + (t_lat[:, 1:] - t_lat[:, :-1])[1:-1, :]
    else:
        lat = dual.lateral[1:-1, :]
        t_lat[1:-1, :] = lat * np.where(lat >= 0.0, u_comp[:-1, :],
                                        u_comp[1:, :])
        conv = conv + (t_lat[1:, :] - t_lat[:-1, :])[:, 1:-1]
    return conv


def momentum_update(state_n: State, rho_np1: Array, phi_np1: Array,
                    fluxes: FluxSet, dt: float, config: SchemeConfig,
                    mesh: MacMesh,
                    rho_sigma: FaceField | None = None) -> FaceField:
    """Dual-cell momentum balance with upwinded convection, the
    electrostatic source and the divergence shift; external faces are
    refilled from the velocity boundary conditions."""
    if rho_sigma is None:
        rho_sigma = interface_density(state_n.rho, mesh, state_n.u,
                                      config.donor_cap)
    rho_d_old = dual_average(state_n.rho, mesh)
    rho_d_new = dual_average(rho_np1, mesh)
    grad_phi = gradient(phi_np1, mesh, config.bc.potential)
    lam = dt * divergence(state_n.u, mesh)
    grad_lam = gradient(lam, mesh, _neumann_bc(mesh.dim))
    out = state_n.u.copy()
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        conv = _dual_convection(state_n.u[axis], fluxes.dual[axis], mesh,
                                axis)
        dv = mesh.dual_vol[axis][sel]
        num = (rho_d_old[axis][sel] * state_n.u[axis][sel]
               - (dt / dv) * conv
               - dt * rho_sigma[axis][sel] * grad_phi[axis][sel]
               + dt * grad_lam[axis][sel])
        out[axis][sel] = num / rho_d_new[axis][sel]
    apply_velocity_bc(out, mesh, config.bc.velocity)
    return out


def _face_perimeter_ratio(mesh: MacMesh, axis: int) -> Array:
    """max |dK|/|K| over the cells adjacent to each face of one family."""
    ratio = mesh.perimeter / mesh.cell_vol
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    out = np.empty(mesh.face_shape(axis))
    out[mesh.interior_faces(axis)] = np.maximum(ratio[tuple(lo)],
                                                ratio[tuple(hi)])
    first = [slice(None)] * mesh.dim
    last = [slice(None)] * mesh.dim
    first[axis] = 0
    last[axis] = -1
    out[mesh.boundary_faces(axis, 0)] = ratio[tuple(first)]
    out[mesh.boundary_faces(axis, 1)] = ratio[tuple(last)]
    return out


def compute_dt(state_n: State, phi_ref: Array, config: SchemeConfig,
               mesh: MacMesh, rho_sigma: FaceField | None = None,
               eta: FaceField | None = None,
               rho_dual: FaceField | None = None) -> float:
    """Explicit time-step rule, the minimum of two bounds.

    Advective bound, over every interior face:

        dt * max(|dK|/|K|, |dL|/|L|) (|u| + sqrt(eta~ |phi_L - phi_K|))
            <= mu / 5,

    with eta~ = eta |sigma| / (|D_sigma| max(...)) and
    mu = min(rho_K, rho_L)/rho_sigma.  Source-term bound, over every
    face: 4 dt^2 alpha <= 1 with
    alpha = max(|dK|/|K|) |sigma| / (|D_sigma| rho_D).  Both are
    predictors using start-of-step fields (the exact conditions involve
    the new potential and dual density; step() re-verifies them after
    the solve).  Scaled by theta_cfl and capped at dt_max."""
    if rho_sigma is None:
        rho_sigma = interface_density(state_n.rho, mesh, state_n.u,
                                      config.donor_cap)
    if rho_dual is None:
        rho_dual = dual_average(state_n.rho, mesh)
    if eta is None:
        eta = eta_field(state_n.rho, rho_sigma, rho_dual, config.gamma)
    ratio = mesh.perimeter / mesh.cell_vol
    bound = np.inf
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        r_k = ratio[tuple(lo)]
        r_l = ratio[tuple(hi)]
        m = np.maximum(r_k, r_l)
        eta_t = (eta[axis][sel] * mesh.face_area[axis][sel]
                 / (mesh.dual_vol[axis][sel] * m))
        dphi = np.abs(phi_ref[tuple(hi)] - phi_ref[tuple(lo)])
        speed = np.abs(state_n.u[axis][sel]) + np.sqrt(eta_t * dphi)
        mu = (np.minimum(state_n.rho[tuple(lo)], state_n.rho[tuple(hi)])
              / rho_sigma[axis][sel])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            cand = np.where(speed > 0.0, mu / (5.0 * m * speed), np.inf)
        bound = min(bound, float(np.min(cand)))
        alpha = (_face_perimeter_ratio(mesh, axis) * mesh.face_area[axis]
                 / (mesh.dual_vol[axis] * rho_dual[axis]))
        bound = min(bound, 0.5 / np.sqrt(float(np.max(alpha))))
    dt = config.theta_cfl * bound
    dt = min(dt, config.dt_max)
    if not np.isfinite(dt) or dt <= 0.0:
        raise RuntimeError(f"time-step rule produced dt = {dt}")
    return dt


def _max_dual_inflow(dual: DualFluxes, mesh: MacMesh, axis: int) -> Array:
    """Largest inward dual-edge flux max(-F_eps, 0) per interior face of
    one family (edges on the domain boundary carry no flux)."""
    ax = dual.axial
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    # Outward fluxes of the dual cell are +axial(hi) and -axial(lo).
    worst = np.maximum(np.maximum(-ax[tuple(hi)], 0.0),
                       np.maximum(ax[tuple(lo)], 0.0))
    if mesh.dim == 1:
        return worst
    lat = dual.lateral
    if axis == 0:
        # Dual cell of face (i, j) has transverse edges lat[i, j] (out is
        # -lat) and lat[i, j + 1] (out is +lat).
        worst = np.maximum(worst, np.maximum(-lat[1:-1, 1:], 0.0))
        worst = np.maximum(worst, np.maximum(lat[1:-1, :-1], 0.0))
    else:
        worst = np.maximum(worst, np.maximum(-lat[1:, 1:-1], 0.0))
        worst = np.maximum(worst, np.maximum(lat[:-1, 1:-1], 0.0))
    return worst


def _stability_violation(dt: float, eta: FaceField, rho_sigma: FaceField,
                         rho_dual_new: FaceField, fluxes: FluxSet,
                         mesh: MacMesh) -> float:
    """Worst ratio over the three per-face conditions that make the
    energy-balance remainders non-positive, evaluated with the step's
    end-of-step dual density and actual fluxes (a value above one means
    the step must be redone with a smaller dt):

      * stabilisation strength  (rho_sigma^n)^2 <= eta rho_D^{n+1};
      * source-term bound       4 dt^2 alpha^{n+1} <= 1 on every face;
      * upwinding bound         4 dt (-F_eps)^+ <= rho_D^{n+1} |D_sigma|
                                per dual edge.
    """
    worst = 0.0
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        rho_d = rho_dual_new[axis]
        worst = max(worst, float(np.max(
            rho_sigma[axis][sel] ** 2 / (eta[axis][sel] * rho_d[sel]))))
        alpha = (_face_perimeter_ratio(mesh, axis) * mesh.face_area[axis]
                 / (mesh.dual_vol[axis] * rho_d))
        worst = max(worst, 4.0 * dt * dt * float(np.max(alpha)))
        inflow = _max_dual_inflow(fluxes.dual[axis], mesh, axis)
        worst = max(worst, float(np.max(
            4.0 * dt * inflow / (rho_d[sel] * mesh.dual_vol[axis][sel]))))
    return worst


def _attempt_step(state_n: State, mesh: MacMesh, config: SchemeConfig,
                  dt: float, rho_sigma: FaceField,
                  eta: FaceField) -> tuple[State, FluxSet]:
    phi_new = implicit_potential_solve(state_n, dt, eta, config, mesh,
                                       rho_sigma)
    fluxes = mass_fluxes(state_n, phi_new, eta, dt, config, mesh, rho_sigma)
    rho_new = mass_update(state_n, phi_new, eta, dt, config, mesh, fluxes)
    u_new = momentum_update(state_n, rho_new, phi_new, fluxes, dt, config,
                            mesh, rho_sigma)
    new_state = State(t=state_n.t + dt, rho=rho_new, u=u_new, phi=phi_new)
    return new_state, fluxes


def _boundary_outflux(fluxes: FluxSet, mesh: MacMesh) -> float:
    total = 0.0
    for axis in range(mesh.dim):
        comp = fluxes.mass[axis]
        total += float(np.sum(comp[mesh.boundary_faces(axis, 1)]))
        total -= float(np.sum(comp[mesh.boundary_faces(axis, 0)]))
    return total


def step(state_n: State, mesh: MacMesh, config: SchemeConfig,
         dt: float | None = None,
         dt_cap: float | None = None) -> tuple[State, StepDiagnostics]:
    """Advance one time level; returns the new state and its monitors.

    When dt is not given it is chosen by compute_dt, optionally clipped
    to dt_cap (used by drivers to land exactly on output times).  The
    predictor uses start-of-step fields, so after the solve the step is
    re-verified against the exact per-face stability conditions (and
    positivity) and redone with half the step until they hold.  A
    caller-supplied dt is used as-is and skips the verification; only a
    positivity failure propagates then.
    """
    rho_sigma = interface_density(state_n.rho, mesh, state_n.u,
                                  config.donor_cap)
    rho_dual = dual_average(state_n.rho, mesh)
    eta = eta_field(state_n.rho, rho_sigma, rho_dual, config.gamma)
    if dt is None:
        chosen = compute_dt(state_n, state_n.phi, config, mesh, rho_sigma,
                            eta, rho_dual)
        if dt_cap is not None:
            chosen = min(chosen, float(dt_cap))
        for redo in range(_MAX_STEP_REDO + 1):
            try:
                new_state, fluxes = _attempt_step(state_n, mesh, config,
                                                  chosen, rho_sigma, eta)
            except PositivityError:
                violation = np.inf
            else:
                rho_d_new = dual_average(new_state.rho, mesh)
                violation = _stability_violation(chosen, eta, rho_sigma,
                                                 rho_d_new, fluxes, mesh)
                if violation <= 1.0:
                    break
            logger.debug("step at t=%.6g redone (violation %.3g, "
                         "dt %.3e -> %.3e)", state_n.t, violation,
                         chosen, 0.5 * chosen)
            chosen *= 0.5
        else:
            raise RuntimeError(
                f"no stable time step found at t = {state_n.t:.6g} "
                f"after {_MAX_STEP_REDO} halvings")
    else:
        chosen = float(dt)
        new_state, fluxes = _attempt_step(state_n, mesh, config, chosen,
                                          rho_sigma, eta)
        rho_d_new = dual_average(new_state.rho, mesh)

    worst_ratio = 0.0
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        worst_ratio = max(worst_ratio, float(np.max(
            rho_dual[axis][sel] / rho_d_new[axis][sel])))
    if worst_ratio > config.gamma * _DENSITY_RATIO_BOUND * (1.0 + 1e-12):
        logger.warning("dual density ratio %.4f exceeds gamma 5/4 at "
                       "t=%.6g", worst_ratio, new_state.t)

    energy = total_energy(new_state, mesh, config.eps, config.bc)
    diag = StepDiagnostics(
        t=new_state.t,
        dt=chosen,
        mass=float(np.sum(mesh.cell_vol * new_state.rho)),
        min_rho=float(np.min(new_state.rho)),
        e_kin=energy.kinetic,
        e_boltz=energy.boltzmann,
        e_field=energy.field,
        e_total=energy.total,
        qn_residual=float(np.max(np.abs(new_state.rho
                                        - np.exp(new_state.phi)))),
        boundary_mass_flux=_boundary_outflux(fluxes, mesh),
        max_density_ratio=worst_ratio,
    )
    return new_state, diag
