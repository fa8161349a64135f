"""Benchmark registry: case contents, overrides, closed variants."""

from __future__ import annotations

import numpy as np
import pytest

from qnepb.bench import case, case_names, closed_variant
from qnepb.mesh import build_mesh, project_initial

ALL_CASES = ("five_branch", "shock_tube", "plasma_expansion", "riemann",
             "cylindrical_explosion", "sheath_1d", "ion_extraction_2d")


def test_registry_names_and_unknown():
    assert set(case_names()) == set(ALL_CASES)
    with pytest.raises(ValueError) as err:
        case("nope")
    assert "five_branch" in str(err.value)


def test_every_case_constructs_and_projects():
    for name in ALL_CASES:
        spec = case(name)
        cells = tuple(min(c, 40) for c in spec.cells)
        mesh = build_mesh(spec.bounds, cells)
        state = project_initial(mesh, spec.rho0, spec.u0, spec.bc,
                                spec.eps, phi0=spec.phi0)
        assert state.rho.min() > 0.0
        assert np.all(np.isfinite(state.phi))


def test_five_branch_contents():
    spec = case("five_branch")
    assert spec.dim == 1 and spec.cells == (100,)
    assert spec.bounds[0] == (0.0, 2.0 * np.pi)
    assert spec.eps == 1.0 and spec.t_final == 1.0
    assert spec.bc.potential[0][0].kind == "periodic"
    assert spec.bc.density[0][0].kind == "neumann_zero"
    x = np.array([np.pi])
    assert spec.rho0(x)[0] == pytest.approx(1.0 / np.pi, rel=1e-14)
    assert spec.u0[0](np.array([np.pi / 2.0]))[0] \
        == pytest.approx(1.0, rel=1e-14)


def test_shock_tube_pairings():
    spec = case("shock_tube")
    assert spec.eps == 1e-2 and spec.cells == (100,) and spec.t_final == 0.2
    assert spec.bounds[0] == (-0.2, 0.2)
    assert spec.reference == "rusanov-fine"
    fine = case("shock_tube", eps=1e-4)
    assert fine.cells == (1000,) and fine.t_final == 0.1
    x = np.array([-0.1, 0.1])
    np.testing.assert_allclose(spec.u0[0](x), [1.0, -1.0])
    np.testing.assert_allclose(spec.rho0(x), 1.0)


def test_plasma_expansion_contents():
    spec = case("plasma_expansion")
    assert spec.bounds[0] == (-10.0, 40.0)
    assert spec.cells == (2000,)
    assert spec.params["full_cells"] == (10000,)
    assert spec.bc.velocity[0][0].kind == "no_slip"
    assert spec.bc.velocity[0][1].kind == "neumann_zero"
    x = np.array([-1e9, 1e9])
    rho = spec.rho0(x)
    assert rho[0] == pytest.approx(1.0, abs=1e-9)
    assert rho[1] == pytest.approx(0.0, abs=1e-9)


def test_riemann_contents_and_override():
    spec = case("riemann")
    assert spec.bounds[0] == (-80.0, 100.0)
    assert spec.eps == 1e-4 and spec.t_final == 50.0
    assert spec.cells == (2000,) and spec.params["full_cells"] == (9000,)
    assert spec.reference == "ice-exact"
    assert spec.params["n_r"] == 0.5
    x = np.array([-1.0, 1.0])
    np.testing.assert_allclose(spec.rho0(x), [1.0, 0.5])
    spec95 = case("riemann", n_r=0.95)
    np.testing.assert_allclose(spec95.rho0(x), [1.0, 0.95])
    assert spec95.params["n_r"] == 0.95
    with pytest.raises(ValueError):
        case("riemann", n_r=1.5)


def test_cylindrical_explosion_contents():
    spec = case("cylindrical_explosion")
    assert spec.dim == 2 and spec.cells == (200, 200)
    assert spec.bounds == ((-1.0, 1.0), (-1.0, 1.0))
    assert spec.eps == 1e-4 and spec.t_final == 0.2
    assert spec.reference == "ice-scheme" and spec.cut == "radial"
    x = np.array([0.0, 0.6])
    y = np.array([0.0, 0.0])
    np.testing.assert_allclose(spec.rho0(x, y), [1.0, 0.1])


def test_sheath_contents():
    spec = case("sheath_1d")
    assert spec.bounds[0] == (0.0, 1.0)
    assert spec.eps == 1e-2 and spec.t_final == 2.5
    assert spec.cells == (500,)
    lo, hi = spec.bc.potential[0]
    assert lo.kind == "neumann_zero"
    assert hi.kind == "dirichlet" and hi.value == -500.0
    dlo, dhi = spec.bc.density[0]
    assert dlo.kind == "dirichlet" and dlo.value == 5.0
    assert dhi.kind == "extrapolate_zero_order"
    vlo, _ = spec.bc.velocity[0]
    assert vlo.kind == "dirichlet" and vlo.value == 1.25
    assert spec.params["inlet_density"] == 5.0
    assert spec.params["inlet_speed"] == 1.25
    assert spec.params["wall_potential"] == -500.0
    x = np.array([0.5])
    assert spec.rho0(x)[0] == 1e-5


def test_ion_extraction_contents():
    spec = case("ion_extraction_2d")
    assert spec.dim == 2 and spec.cells == (80, 200)
    assert spec.eps == 0.18e-2
    assert spec.snapshot_times[:3] == (0.1, 0.3, 0.5)
    _, hi = spec.bc.potential[0]
    assert hi.kind == "dirichlet" and hi.value == -1000.0
    ylo, yhi = spec.bc.potential[1]
    assert ylo.value == -10.0 and yhi.value == -10.0
    x = np.array([0.3, 0.9])
    y = np.array([1.25, 1.25])
    rho = spec.rho0(x, y)
    assert rho[0] == 5.0 and rho[1] == 1e-5
    v = spec.u0[1](x, y)
    assert v[0] == 0.25 and v[1] == 0.0


def test_snapshot_times_include_final():
    for name in ALL_CASES:
        spec = case(name)
        assert spec.t_final in spec.snapshot_times


def test_closed_variant_replaces_boundaries():
    spec = closed_variant(case("shock_tube"))
    assert spec.bc.density[0][0].kind == "neumann_zero"
    assert spec.bc.velocity[0][0].kind == "no_slip"
    assert spec.bc.potential[0][1].kind == "neumann_zero"
    # Initial data and geometry are untouched.
    base = case("shock_tube")
    assert spec.bounds == base.bounds and spec.cells == base.cells


def test_cells_override_scalar_and_tuple():
    assert case("riemann", cells=500).cells == (500,)
    assert case("cylindrical_explosion", cells=(50, 60)).cells == (50, 60)
