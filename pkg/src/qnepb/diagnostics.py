"""Energy, conservation and profile diagnostics over discrete states.

All functions are read-only over the state and safe to call at any
frequency.  The discrete total energy splits into a kinetic part on dual
cells, the electron (Boltzmann) part e^phi (phi - 1) on primal cells and
the electric field part on dual cells; the time stepper guarantees the
total is non-increasing for closed boundaries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .discops import gradient
from .mesh import Array, BCSide, BoundarySpec, MacMesh, dual_average


def _default_bc(dim: int):
    side = BCSide("neumann_zero")
    return tuple((side, side) for _ in range(dim))

#: Column order of the diagnostics CSV.
CSV_HEADER = ("t", "dt", "mass", "min_rho", "E_kin", "E_boltz", "E_field",
              "E_total", "qn_residual")


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    boltzmann: float
    field: float

    @property
    def total(self) -> float:
        return self.kinetic + self.boltzmann + self.field


def _field_term(phi: Array, mesh: MacMesh, eps: float,
                bc: BoundarySpec | None) -> float:
    if eps == 0.0:
        return 0.0
    potential_bc = bc.potential if bc is not None else _default_bc(mesh.dim)
    grad = gradient(phi, mesh, potential_bc)
    total = 0.0
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        total += float(np.sum(mesh.dual_vol[axis][sel] * grad[axis][sel] ** 2))
        if potential_bc[axis][0].kind == "periodic":
            # The wrap face appears once, with the wrap dual measure.
            w = mesh.widths[axis]
            wrap_dist = 0.5 * (w[0] + w[-1])
            area = mesh.face_area[axis][mesh.boundary_faces(axis, 0)]
            g = grad[axis][mesh.boundary_faces(axis, 0)]
            total += float(np.sum(wrap_dist * area * g ** 2))
    return 0.5 * eps * eps * total


def total_energy(state, mesh: MacMesh, eps: float,
                 bc: BoundarySpec | None = None) -> EnergyBreakdown:
    """Discrete energy of a state; interior faces carry the kinetic and
    field sums (plus the wrap face once under a periodic potential)."""
    rho_dual = dual_average(state.rho, mesh)
    kinetic = 0.0
    for axis in range(mesh.dim):
        sel = mesh.interior_faces(axis)
        kinetic += 0.5 * float(np.sum(mesh.dual_vol[axis][sel]
                                      * rho_dual[axis][sel]
                                      * state.u[axis][sel] ** 2))
    boltzmann = float(np.sum(mesh.cell_vol * np.exp(state.phi)
                             * (state.phi - 1.0)))
    field = _field_term(state.phi, mesh, eps, bc)
    return EnergyBreakdown(kinetic=kinetic, boltzmann=boltzmann, field=field)


def quasineutrality_residual(state) -> float:
    """max_K |rho_K - exp(phi_K)|, the charge imbalance of the state."""
    return float(np.max(np.abs(state.rho - np.exp(state.phi))))


def energy_remainder(phi_new: Array, phi_old: Array, mesh: MacMesh,
                     eps: float, bc: BoundarySpec | None = None) -> Array:
    """Per-cell dissipation remainder of the potential-energy balance
    (times dt): |K| (e^x (x - y - 1) + e^y) with x, y the new and old
    potentials, plus the squared field increment over the cell's faces.
    Non-negative by construction."""
    x = phi_new
    y = phi_old
    cell = mesh.cell_vol * (np.exp(x) * (x - y - 1.0) + np.exp(y))
    if eps == 0.0:
        return cell
    potential_bc = bc.potential if bc is not None else _default_bc(mesh.dim)
    g_new = gradient(phi_new, mesh, potential_bc)
    g_old = gradient(phi_old, mesh, potential_bc)
    quarter = 0.25 * eps * eps
    out = cell.copy()
    for axis in range(mesh.dim):
        diff = mesh.dual_vol[axis] * (g_new[axis] - g_old[axis]) ** 2
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        # Each cell sees its two faces of this family.
        out += quarter * (diff[tuple(lo)] + diff[tuple(hi)])
    return out


def sheath_edge(rho_profile: Array, plateau_density: float,
                x: Array) -> float:
    """Largest position where the density crosses half the plateau value,
    linearly interpolated between the two straddling samples."""
    rho = np.asarray(rho_profile, dtype=float)
    x = np.asarray(x, dtype=float)
    level = 0.5 * float(plateau_density)
    above = np.nonzero(rho >= level)[0]
    if above.size == 0:
        raise ValueError("profile never reaches half the plateau density")
    i = int(above[-1])
    if i == len(rho) - 1:
        return float(x[-1])
    frac = (rho[i] - level) / (rho[i] - rho[i + 1])
    return float(x[i] + frac * (x[i + 1] - x[i]))


class DiagSeries:
    """Append-only per-step diagnostic records with CSV serialisation."""

    def __init__(self) -> None:
        self.records: list = []

    def append(self, record) -> None:
        if self.records and record.t <= self.records[-1].t:
            raise ValueError("diagnostic timestamps must strictly increase")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> Array:
        mapping = {"E_kin": "e_kin", "E_boltz": "e_boltz",
                   "E_field": "e_field", "E_total": "e_total"}
        attr = mapping.get(name, name)
        return np.asarray([getattr(r, attr) for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_HEADER)
            for r in self.records:
                writer.writerow(["%.17g" % v for v in (
                    r.t, r.dt, r.mass, r.min_rho, r.e_kin, r.e_boltz,
                    r.e_field, r.e_total, r.qn_residual)])
