"""Staggered Cartesian MAC grids in one and two space dimensions.

Scalar unknowns (density, potential) are stored as one value per primal
cell; velocity components are stored on the faces orthogonal to their
axis.  Every face carries a dual cell built from the two half-cells
adjacent to it, which acts as the momentum control volume.  This module
owns the grid geometry, boundary-condition metadata, dual averaging of
cell fields onto faces, and the projection of initial data onto the grid.

Array layout conventions
------------------------
* cell fields ("primal fields"): shape ``(nx,)`` in 1D, ``(nx, ny)`` in 2D.
* face fields: one array per axis family.  Family 0 (x-normal faces) has
  shape ``(nx+1,)`` / ``(nx+1, ny)``; family 1 (y-normal faces) has shape
  ``(nx, ny+1)``.  Values are components along the positive axis
  direction; outward signs are applied at use sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

#: Admissible boundary-condition kinds for any variable/side.
BC_KINDS = (
    "neumann_zero",
    "dirichlet",
    "periodic",
    "extrapolate_zero_order",
    "no_slip",
)


@dataclass(frozen=True)
class BCSide:
    """Boundary condition on one side of the domain for one variable."""

    kind: str
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")


# Per-variable boundary data: one (low side, high side) pair per axis.
VarBC = tuple[tuple[BCSide, BCSide], ...]


def _coerce_side(side) -> BCSide:
    """Accept a BCSide, a bare kind string, or a (kind, value) pair."""
    if isinstance(side, BCSide):
        return side
    if isinstance(side, str):
        return BCSide(side)
    kind, value = side
    return BCSide(kind, float(value))


def _normalize_var_bc(spec, dim: int) -> VarBC:
    """Expand a convenience spec into the per-axis/per-side tuple form.

    Accepts a bare kind string or BCSide (applied to every side), or a
    sequence with one (low, high) entry per axis whose items may again be
    strings, (kind, value) pairs or BCSide values.
    """
    if isinstance(spec, (str, BCSide)):
        side = _coerce_side(spec)
        return tuple(((side, side)) for _ in range(dim))
    out = []
    for axis_entry in spec:
        lo, hi = axis_entry
        out.append((_coerce_side(lo), _coerce_side(hi)))
    if len(out) != dim:
        raise ValueError("boundary spec does not match mesh dimension")
    return tuple(out)


def _check_periodic_pairing(var: VarBC, name: str) -> None:
    for axis, (lo, hi) in enumerate(var):
        if (lo.kind == "periodic") != (hi.kind == "periodic"):
            raise ValueError(
                f"periodic {name} boundary on axis {axis} must be declared "
                "on both sides"
            )


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary conditions per variable (density, velocity, potential).

    Each variable holds one ``(low, high)`` pair of :class:`BCSide` per
    axis.  Periodic sides must be paired per axis and variable.
    """

    density: VarBC
    velocity: VarBC
    potential: VarBC

    def __post_init__(self) -> None:
        _check_periodic_pairing(self.density, "density")
        _check_periodic_pairing(self.velocity, "velocity")
        _check_periodic_pairing(self.potential, "potential")

    @staticmethod
    def make(dim: int, density="neumann_zero", velocity="no_slip",
             potential="neumann_zero") -> "BoundarySpec":
        """Build a spec from per-variable convenience arguments."""
        return BoundarySpec(
            density=_normalize_var_bc(density, dim),
            velocity=_normalize_var_bc(velocity, dim),
            potential=_normalize_var_bc(potential, dim),
        )

    def periodic_axis(self, variable: str, axis: int) -> bool:
        var: VarBC = getattr(self, variable)
        return var[axis][0].kind == "periodic"


class FaceField:
    """One array of face values per axis family.

    The container is deliberately thin: scheme code indexes the per-axis
    arrays directly and mutates them in place where boundary values are
    filled.
    """

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Array]):
        self.components = tuple(np.asarray(c, dtype=float) for c in components)

    def __getitem__(self, axis: int) -> Array:
        return self.components[axis]

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def copy(self) -> "FaceField":
        return FaceField(tuple(c.copy() for c in self.components))

    @staticmethod
    def zeros(mesh: "MacMesh") -> "FaceField":
        return FaceField(tuple(np.zeros(mesh.face_shape(axis))
                               for axis in range(mesh.dim)))

    @staticmethod
    def full(mesh: "MacMesh", value: float) -> "FaceField":
        return FaceField(tuple(np.full(mesh.face_shape(axis), float(value))
                               for axis in range(mesh.dim)))


@dataclass(frozen=True)
class MacMesh:
    """Geometry of a 1D/2D Cartesian MAC grid (possibly non-uniform).

    Attributes
    ----------
    faces : per-axis arrays of face coordinates, length ``n_i + 1``.
    widths : per-axis cell widths.
    centers : per-axis cell center coordinates.
    cell_vol : cell measures |K|, shaped like a primal field.
    face_area : per-family face measures |sigma|, shaped like face fields.
    dual_vol : per-family dual-cell measures |D_sigma|.
    perimeter : per-cell boundary measures |dK| = sum of face areas.
    """

    faces: tuple[Array, ...]
    widths: tuple[Array, ...]
    centers: tuple[Array, ...]
    cell_vol: Array
    face_area: tuple[Array, ...]
    dual_vol: tuple[Array, ...]
    perimeter: Array

    @property
    def dim(self) -> int:
        return len(self.faces)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.widths)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.shape)
        shape[axis] += 1
        return tuple(shape)

    def interior_faces(self, axis: int):
        """Index expression selecting the interior faces of one family."""
        idx = [slice(None)] * self.dim
        idx[axis] = slice(1, -1)
        return tuple(idx)

    def boundary_faces(self, axis: int, side: int):
        """Index expression selecting the low (0) or high (1) external faces."""
        idx = [slice(None)] * self.dim
        idx[axis] = 0 if side == 0 else -1
        return tuple(idx)

    @property
    def domain_measure(self) -> float:
        return float(np.sum(self.cell_vol))

    def regularity_ratios(self) -> dict[str, float]:
        """Mesh-regularity quantities: max diam(K)^2/|K| and max |D_sigma|/|K|."""
        diam_sq = np.zeros(self.shape)
        for axis in range(self.dim):
            w = self.widths[axis]
            w = w.reshape([-1 if a == axis else 1 for a in range(self.dim)])
            diam_sq = diam_sq + w ** 2
        max_diam_ratio = float(np.max(diam_sq / self.cell_vol))
        max_dual_ratio = 0.0
        for axis in range(self.dim):
            dv = self.dual_vol[axis]
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            ratio = np.maximum(dv[tuple(lo)], dv[tuple(hi)]) / self.cell_vol
            max_dual_ratio = max(max_dual_ratio, float(np.max(ratio)))
        return {"diam_sq_over_vol": max_diam_ratio,
                "dual_over_vol": max_dual_ratio}


def _axis_faces(bounds: tuple[float, float], n: int, grading) -> Array:
    lo, hi = float(bounds[0]), float(bounds[1])
    if hi <= lo:
        raise ValueError(f"inverted bounds ({lo}, {hi})")
    if n < 2:
        raise ValueError(f"need at least 2 cells per axis, got {n}")
    if grading is None or (isinstance(grading, str) and grading == "uniform"):
        return np.linspace(lo, hi, n + 1)
    if callable(grading):
        xi = np.linspace(0.0, 1.0, n + 1)
        faces = lo + (hi - lo) * np.asarray([grading(s) for s in xi], float)
    else:
        faces = np.asarray(grading, dtype=float)
    if faces.shape != (n + 1,) or np.any(np.diff(faces) <= 0):
        raise ValueError("graded face coordinates must be strictly increasing "
                         "with length n+1")
    if not (np.isclose(faces[0], lo) and np.isclose(faces[-1], hi)):
        raise ValueError("graded face coordinates must span the given bounds")
    return faces


def build_mesh(domain_bounds, cells_per_axis, grading=None) -> MacMesh:
    """Construct a MAC grid.

    Parameters
    ----------
    domain_bounds : ``(lo, hi)`` for 1D or a sequence of such pairs.
    cells_per_axis : int or sequence of ints, at least 2 per axis.
    grading : None for uniform spacing, a callable [0,1]->[0,1], an explicit
        face-coordinate array, or a per-axis sequence of these.
    """
    bounds = np.atleast_2d(np.asarray(domain_bounds, dtype=float))
    dim = bounds.shape[0]
    if dim not in (1, 2):
        raise ValueError("only 1D and 2D meshes are supported")
    if np.isscalar(cells_per_axis):
        cells = (int(cells_per_axis),) * dim
    else:
        cells = tuple(int(n) for n in cells_per_axis)
    if len(cells) != dim:
        raise ValueError("cells_per_axis does not match the number of axes")
    if grading is None or callable(grading) or isinstance(grading, str):
        gradings = (grading,) * dim
    else:
        gradings = tuple(grading)

    faces = tuple(_axis_faces(tuple(bounds[a]), cells[a], gradings[a])
                  for a in range(dim))
    widths = tuple(np.diff(f) for f in faces)
    centers = tuple(0.5 * (f[:-1] + f[1:]) for f in faces)

    # Half-distances between adjacent cell centers, extended by half cells
    # at the domain ends: the per-axis extent of each dual cell.
    half = []
    for w in widths:
        h = np.empty(len(w) + 1)
        h[0] = 0.5 * w[0]
        h[-1] = 0.5 * w[-1]
        h[1:-1] = 0.5 * (w[:-1] + w[1:])
        half.append(h)

    if dim == 1:
        (wx,) = widths
        cell_vol = wx.copy()
        face_area = (np.ones(len(wx) + 1),)
        dual_vol = (half[0],)
        perimeter = np.full(len(wx), 2.0)
    else:
        wx, wy = widths
        nx, ny = len(wx), len(wy)
        cell_vol = wx[:, None] * wy[None, :]
        face_area = (
            np.broadcast_to(wy[None, :], (nx + 1, ny)).copy(),
            np.broadcast_to(wx[:, None], (nx, ny + 1)).copy(),
        )
        dual_vol = (
            half[0][:, None] * wy[None, :],
            wx[:, None] * half[1][None, :],
        )
        perimeter = 2.0 * (wx[:, None] + wy[None, :])

    return MacMesh(faces=faces, widths=widths, centers=centers,
                   cell_vol=cell_vol, face_area=face_area,
                   dual_vol=dual_vol, perimeter=perimeter)


def dual_average(rho: Array, mesh: MacMesh) -> FaceField:
    """Average a cell field onto dual cells, one array per face family.

    Interior faces get the dual-volume-weighted mean of the two adjacent
    cells; external faces carry the adjacent cell value.
    """
    rho = np.asarray(rho, dtype=float)
    out = []
    for axis in range(mesh.dim):
        avg = np.empty(mesh.face_shape(axis))
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        qk = rho[tuple(lo)]
        ql = rho[tuple(hi)]
        dv = mesh.dual_vol[axis]
        # |D_{sigma,K}| = |K|/2 along the face axis.
        vk = 0.5 * mesh.cell_vol[tuple(lo)]
        vl = 0.5 * mesh.cell_vol[tuple(hi)]
        avg[mesh.interior_faces(axis)] = (
            (vk * qk + vl * ql) / dv[mesh.interior_faces(axis)]
        )
        avg[mesh.boundary_faces(axis, 0)] = np.take(rho, 0, axis=axis)
        avg[mesh.boundary_faces(axis, 1)] = np.take(rho, -1, axis=axis)
        out.append(avg)
    return FaceField(out)


def cell_center_grid(mesh: MacMesh) -> tuple[Array, ...]:
    """Cell-center coordinate arrays, broadcast to the primal shape."""
    if mesh.dim == 1:
        return (mesh.centers[0],)
    return tuple(np.meshgrid(*mesh.centers, indexing="ij"))


def face_center_grid(mesh: MacMesh, axis: int) -> tuple[Array, ...]:
    """Face-center coordinate arrays for one face family."""
    coords = [mesh.centers[a] for a in range(mesh.dim)]
    coords[axis] = mesh.faces[axis]
    if mesh.dim == 1:
        return (coords[0],)
    return tuple(np.meshgrid(*coords, indexing="ij"))


def apply_velocity_bc(u: FaceField, mesh: MacMesh, bc_velocity: VarBC) -> None:
    """Fill external-face velocity values in place from the declared BCs.

    no_slip pins the external face to zero; neumann_zero and
    extrapolate_zero_order copy the nearest interior face; dirichlet pins
    the declared value.  Periodic velocity boundaries identify the two end
    faces and are mirrored from the low-side face.
    """
    for axis in range(mesh.dim):
        comp = u[axis]
        for side in (0, 1):
            kind = bc_velocity[axis][side].kind
            target = mesh.boundary_faces(axis, side)
            if kind == "no_slip":
                comp[target] = 0.0
            elif kind in ("neumann_zero", "extrapolate_zero_order"):
                nearest = [slice(None)] * mesh.dim
                nearest[axis] = 1 if side == 0 else -2
                comp[target] = comp[tuple(nearest)]
            elif kind == "dirichlet":
                comp[target] = bc_velocity[axis][side].value
            elif kind == "periodic":
                if side == 1:
                    comp[target] = comp[mesh.boundary_faces(axis, 0)]


def project_initial(mesh: MacMesh, rho0: Callable, u0, bc: BoundarySpec,
                    eps: float, phi0: Callable | None = None,
                    newton_tol: float = 1e-10):
    """Project analytic initial data onto the grid and return a State.

    Density is sampled at cell centers and velocity components at face
    centers (midpoint quadrature).  The initial potential is obtained by
    solving the discrete Poisson-Boltzmann equation with the projected
    density unless an analytic ``phi0`` is supplied, in which case it is
    sampled at cell centers.
    """
    from .apscheme import State
    from .pbsolver import EllipticProblem, solve_pb

    rho = np.asarray(rho0(*cell_center_grid(mesh)), dtype=float)
    rho = np.broadcast_to(rho, mesh.shape).copy()
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise ValueError("projected initial density must be strictly positive")

    if callable(u0):
        u0 = (u0,)
    comps = []
    for axis in range(mesh.dim):
        vals = np.asarray(u0[axis](*face_center_grid(mesh, axis)), dtype=float)
        comps.append(np.broadcast_to(vals, mesh.face_shape(axis)).copy())
    u = FaceField(comps)
    apply_velocity_bc(u, mesh, bc.velocity)

    if phi0 is not None:
        phi = np.asarray(phi0(*cell_center_grid(mesh)), dtype=float)
        phi = np.broadcast_to(phi, mesh.shape).copy()
    elif eps == 0.0:
        # Formal quasineutral limit: the potential degenerates to ln(rho).
        phi = np.log(rho)
    else:
        coeff = FaceField(tuple(np.full(mesh.face_shape(a), eps * eps)
                                for a in range(mesh.dim)))
        problem = EllipticProblem(mesh=mesh, coeff=coeff, rhs=rho,
                                  bc=bc.potential, newton_tol=newton_tol)
        phi = solve_pb(problem)
    return State(t=0.0, rho=rho, u=u, phi=phi)
