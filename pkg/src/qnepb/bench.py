"""Benchmark case registry.

Each case packages a domain, mesh resolution, scaled Debye length,
closed-form initial data, boundary conditions and an optional reference
recipe.  Lookups return a fully populated, immutable :class:`CaseSpec`;
keyword overrides rebuild the case so that initial-data closures stay
consistent with the overridden parameters (for example the right-state
density of the Riemann case).

The two largest published meshes (plasma_expansion, riemann) default to
a 2000-cell desk scale; the full resolutions are stored in
``params["full_cells"]`` and reachable through the ``cells`` override.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .mesh import BoundarySpec

Bounds = tuple[tuple[float, float], ...]
Cells = tuple[int, ...]


@dataclass(frozen=True)
class CaseSpec:
    """Complete description of one benchmark configuration."""

    name: str
    dim: int
    bounds: Bounds
    cells: Cells
    eps: float
    t_final: float
    bc: BoundarySpec
    rho0: Callable
    u0: tuple[Callable, ...]
    phi0: Callable | None = None
    reference: str = "none"
    snapshot_times: tuple[float, ...] = ()
    cut: str | None = None
    params: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self) -> None:
        if self.reference not in ("none", "rusanov-fine", "ice-exact",
                                  "ice-scheme"):
            raise ValueError(f"unknown reference recipe {self.reference!r}")
        if len(self.bounds) != self.dim or len(self.cells) != self.dim:
            raise ValueError("bounds/cells arity must match the dimension")


def _desk_cells(cells, default: Cells) -> Cells:
    if cells is None:
        return default
    if np.isscalar(cells):
        return (int(cells),) * len(default)
    return tuple(int(c) for c in cells)


def _five_branch(eps: float = 1.0, cells=None,
                 t_final: float = 1.0) -> CaseSpec:
    cells = _desk_cells(cells, (100,))
    return CaseSpec(
        name="five_branch", dim=1, bounds=((0.0, 2.0 * np.pi),),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(1, density="neumann_zero",
                             velocity="neumann_zero", potential="periodic"),
        rho0=lambda x: np.exp(-((x - np.pi) ** 2)) / np.pi,
        u0=(lambda x: np.sin(x) ** 3,),
        snapshot_times=(t_final,),
        notes="Gaussian density hump with a cubed-sine velocity; runs at "
              "eps = 1 and eps = 1e-2.",
    )


def _shock_tube(eps: float = 1e-2, cells=None,
                t_final: float | None = None) -> CaseSpec:
    # Published pairings: eps = 1e-2 on 100 cells to T = 0.2 and
    # eps = 1e-4 on 1000 cells to T = 0.1.
    cells = _desk_cells(cells, (100,) if eps >= 1e-3 else (1000,))
    if t_final is None:
        t_final = 0.2 if eps >= 1e-3 else 0.1
    return CaseSpec(
        name="shock_tube", dim=1, bounds=((-0.2, 0.2),),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(1, density="extrapolate_zero_order",
                             velocity="extrapolate_zero_order",
                             potential="periodic"),
        rho0=lambda x: np.ones_like(x),
        u0=(lambda x: np.where(x < 0.0, 1.0, -1.0),),
        reference="rusanov-fine",
        snapshot_times=(t_final,),
        notes="Colliding streams on a uniform density; two shock waves "
              "travel outward from the collision front.",
    )


def _plasma_expansion(eps: float = 1e-2, cells=None,
                      t_final: float = 5.0) -> CaseSpec:
    cells = _desk_cells(cells, (2000,))
    return CaseSpec(
        name="plasma_expansion", dim=1, bounds=((-10.0, 40.0),),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(
            1, density="neumann_zero",
            velocity=(("no_slip", "neumann_zero"),),
            potential="neumann_zero"),
        rho0=lambda x: 0.5 - np.arctan(np.pi * x) / np.pi,
        u0=(lambda x: np.zeros_like(x),),
        snapshot_times=(t_final,),
        params={"full_cells": (10000,)},
        notes="Smooth ion front initially at rest expanding to the right.",
    )


def _riemann(n_r: float = 0.5, eps: float = 1e-4, cells=None,
             t_final: float = 50.0) -> CaseSpec:
    if not 0.0 < n_r <= 1.0:
        raise ValueError("right-state density must lie in (0, 1]")
    cells = _desk_cells(cells, (2000,))
    return CaseSpec(
        name="riemann", dim=1, bounds=((-80.0, 100.0),),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(1, density="extrapolate_zero_order",
                             velocity="no_slip", potential="neumann_zero"),
        rho0=lambda x: np.where(x <= 0.0, 1.0, n_r),
        u0=(lambda x: np.zeros_like(x),),
        reference="ice-exact",
        snapshot_times=(t_final,),
        params={"n_r": n_r, "full_cells": (9000,)},
        notes="Density jump relaxing onto the self-similar quasineutral "
              "solution (rarefaction, contact plateau, shock).",
    )


def _cylindrical_explosion(eps: float = 1e-4, cells=None,
                           t_final: float = 0.2) -> CaseSpec:
    cells = _desk_cells(cells, (200, 200))
    return CaseSpec(
        name="cylindrical_explosion", dim=2,
        bounds=((-1.0, 1.0), (-1.0, 1.0)),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(2, density="neumann_zero", velocity="no_slip",
                             potential="neumann_zero"),
        rho0=lambda x, y: np.where(x * x + y * y <= 0.25, 1.0, 0.1),
        u0=(lambda x, y: np.zeros_like(x), lambda x, y: np.zeros_like(x)),
        reference="ice-scheme",
        snapshot_times=(t_final,),
        cut="radial",
        params={"inner_density": 1.0, "outer_density": 0.1, "radius": 0.5},
        notes="Axisymmetric density disc released at rest in a closed box.",
    )


def _sheath_1d(eps: float = 1e-2, cells=None,
               t_final: float = 2.5) -> CaseSpec:
    cells = _desk_cells(cells, (500,))
    inlet_density, inlet_speed, wall_potential = 5.0, 1.25, -500.0
    return CaseSpec(
        name="sheath_1d", dim=1, bounds=((0.0, 1.0),),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(
            1,
            density=((("dirichlet", inlet_density),
                      "extrapolate_zero_order"),),
            velocity=((("dirichlet", inlet_speed),
                       "extrapolate_zero_order"),),
            potential=(("neumann_zero", ("dirichlet", wall_potential)),)),
        rho0=lambda x: np.full_like(x, 1e-5),
        u0=(lambda x: np.zeros_like(x),),
        snapshot_times=(t_final,),
        params={"inlet_density": inlet_density, "inlet_speed": inlet_speed,
                "wall_potential": wall_potential},
        notes="Ion beam injected into a near-vacuum against a biased wall; "
              "a space-charge sheath forms at the right boundary.",
    )


def _ion_extraction_2d(eps: float = 0.18e-2, cells=None,
                       t_final: float = 0.5) -> CaseSpec:
    cells = _desk_cells(cells, (80, 200))
    block_density, floor_density, drift_speed = 5.0, 1e-5, 0.25

    def in_block(x, y):
        return (x <= 0.75) & (y >= 0.75) & (y <= 1.75)

    return CaseSpec(
        name="ion_extraction_2d", dim=2,
        bounds=((0.0, 1.0), (0.0, 2.5)),
        cells=cells, eps=eps, t_final=t_final,
        bc=BoundarySpec.make(
            2, density="extrapolate_zero_order",
            velocity=(("no_slip", "extrapolate_zero_order"),
                      ("extrapolate_zero_order", "extrapolate_zero_order")),
            potential=(("neumann_zero", ("dirichlet", -1000.0)),
                       (("dirichlet", -10.0), ("dirichlet", -10.0)))),
        rho0=lambda x, y: np.where(in_block(x, y), block_density,
                                   floor_density),
        u0=(lambda x, y: np.zeros_like(x),
            lambda x, y: np.where(in_block(x, y), drift_speed, 0.0)),
        snapshot_times=(0.1, 0.3, 0.5),
        params={"block_density": block_density,
                "floor_density": floor_density,
                "drift_speed": drift_speed,
                "cathode_potential": -1000.0,
                "guard_potential": -10.0},
        notes="Drifting plasma column extracted through a vacuum gap "
              "toward a high-voltage cathode at the right boundary.",
    )


_REGISTRY: dict[str, Callable[..., CaseSpec]] = {
    "five_branch": _five_branch,
    "shock_tube": _shock_tube,
    "plasma_expansion": _plasma_expansion,
    "riemann": _riemann,
    "cylindrical_explosion": _cylindrical_explosion,
    "sheath_1d": _sheath_1d,
    "ion_extraction_2d": _ion_extraction_2d,
}


def case_names() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def case(name: str, **overrides) -> CaseSpec:
    """Registry lookup; overrides rebuild the case consistently."""
    try:
        builder = _REGISTRY[name]
    except KeyError:
        known = ", ".join(case_names())
        raise ValueError(f"unknown case {name!r} (known: {known})") from None
    spec = builder(**overrides)
    if spec.t_final not in spec.snapshot_times:
        spec = replace(spec, snapshot_times=tuple(
            sorted(set(spec.snapshot_times) | {spec.t_final})))
    return spec


def closed_variant(spec: CaseSpec) -> CaseSpec:
    """Same initial data inside a closed box (impermeable walls).

    Velocity walls become no-slip and density/potential sides homogeneous
    Neumann, the setting in which the discrete energy bound holds.
    """
    return replace(spec, bc=BoundarySpec.make(
        spec.dim, density="neumann_zero", velocity="no_slip",
        potential="neumann_zero"))
