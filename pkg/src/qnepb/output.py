"""Snapshot, cut and manifest writers.

CSV files carry a header row and 17-significant-digit floats so values
round-trip bit-exactly.  Two-dimensional fields are also written as
legacy-ASCII VTK rectilinear grids with cell data (density, potential)
and velocities interpolated to the grid points.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import FaceField, MacMesh

_FMT = "%.17g"


def cell_velocity(u: FaceField, mesh: MacMesh) -> tuple[np.ndarray, ...]:
    """Velocity components averaged from faces to cell centers."""
    comps = []
    for axis in range(mesh.dim):
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        comps.append(0.5 * (u[axis][tuple(lo)] + u[axis][tuple(hi)]))
    return tuple(comps)


def point_velocity_2d(u: FaceField, mesh: MacMesh) -> tuple[np.ndarray,
                                                            np.ndarray]:
    """Velocity components averaged from faces to grid points (2D)."""
    nx, ny = mesh.shape
    px = np.empty((nx + 1, ny + 1))
    px[:, 1:-1] = 0.5 * (u[0][:, :-1] + u[0][:, 1:])
    px[:, 0] = u[0][:, 0]
    px[:, -1] = u[0][:, -1]
    py = np.empty((nx + 1, ny + 1))
    py[1:-1, :] = 0.5 * (u[1][:-1, :] + u[1][1:, :])
    py[0, :] = u[1][0, :]
    py[-1, :] = u[1][-1, :]
    return px, py


def _write_table(path, header: tuple[str, ...], columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float).ravel()
                            for c in columns])
    np.savetxt(path, data, fmt=_FMT, delimiter=",",
               header=",".join(header), comments="")


def write_snapshot(state, mesh: MacMesh, fmt: str, path,
                   exact=None) -> Path:
    """Write one field snapshot; returns the written path.

    1D data always goes to CSV (``x,rho,u,phi`` plus optional
    ``rho_exact,u_exact`` columns).  2D data goes to CSV
    (``x,y,rho,u,v,phi``) or a legacy VTK rectilinear grid.
    """
    path = Path(path)
    if mesh.dim == 1:
        u_c = cell_velocity(state.u, mesh)[0]
        header = ("x", "rho", "u", "phi")
        columns = [mesh.centers[0], state.rho, u_c, state.phi]
        if exact is not None:
            rho_e, u_e = exact
            header += ("rho_exact", "u_exact")
            columns += [rho_e, u_e]
        _write_table(path, header, columns)
        return path
    if fmt == "vtk":
        _write_vtk_2d(state, mesh, path)
        return path
    xg, yg = np.meshgrid(mesh.centers[0], mesh.centers[1], indexing="ij")
    u_c, v_c = cell_velocity(state.u, mesh)
    _write_table(path, ("x", "y", "rho", "u", "v", "phi"),
                 [xg, yg, state.rho, u_c, v_c, state.phi])
    return path


def _vtk_values(handle, values: np.ndarray) -> None:
    # VTK orders rectilinear data with the x index running fastest.
    flat = np.asarray(values, dtype=float).ravel(order="F")
    for start in range(0, flat.size, 6):
        handle.write(" ".join(_FMT % v for v in flat[start:start + 6]))
        handle.write("\n")


def _write_vtk_2d(state, mesh: MacMesh, path: Path) -> None:
    nx, ny = mesh.shape
    px, py = point_velocity_2d(state.u, mesh)
    vectors = np.stack(
        [px.ravel(order="F"), py.ravel(order="F"),
         np.zeros(px.size)], axis=1)
    with open(path, "w", encoding="ascii") as handle:
        handle.write("# vtk DataFile Version 3.0\n")
        handle.write(f"fields t={state.t!r}\n")
        handle.write("ASCII\nDATASET RECTILINEAR_GRID\n")
        handle.write(f"DIMENSIONS {nx + 1} {ny + 1} 1\n")
        handle.write(f"X_COORDINATES {nx + 1} double\n")
        _vtk_values(handle, mesh.faces[0])
        handle.write(f"Y_COORDINATES {ny + 1} double\n")
        _vtk_values(handle, mesh.faces[1])
        handle.write("Z_COORDINATES 1 double\n0\n")
        handle.write(f"CELL_DATA {nx * ny}\n")
        for name, values in (("rho", state.rho), ("phi", state.phi)):
            handle.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
            _vtk_values(handle, values)
        handle.write(f"POINT_DATA {(nx + 1) * (ny + 1)}\n")
        handle.write("VECTORS velocity double\n")
        for row in vectors:
            handle.write(" ".join(_FMT % v for v in row))
            handle.write("\n")


def radial_cut(state, mesh: MacMesh):
    """Profile along the +x half-row nearest the horizontal centerline.

    Returns ``(r, rho, u_r, phi)`` sampled at cell centers.  Intended for
    radially symmetric 2D fields centered at the origin.
    """
    if mesh.dim != 2:
        raise ValueError("radial cuts are defined for 2D fields")
    j = int(np.argmin(np.abs(mesh.centers[1])))
    i0 = int(np.searchsorted(mesh.centers[0], 0.0))
    u_c = cell_velocity(state.u, mesh)[0]
    r = mesh.centers[0][i0:]
    return (r, state.rho[i0:, j], u_c[i0:, j], state.phi[i0:, j])


def write_radial_cut(state, mesh: MacMesh, path) -> Path:
    path = Path(path)
    r, rho, u_r, phi = radial_cut(state, mesh)
    _write_table(path, ("r", "rho", "u_r", "phi"), [r, rho, u_r, phi])
    return path


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    with open(path, "w", encoding="ascii") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
