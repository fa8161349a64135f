"""Semi-implicit stepper: stabilisation, updates, dt rule, full steps."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import (advance_to, box_mesh, closed_bc, line_mesh,
                      periodic_phi_bc, random_state)
from qnepb.apscheme import (PositivityError, SchemeConfig, State,
                            _dual_convection, compute_dt, dual_fluxes,
                            eta_field, implicit_potential_solve, mass_fluxes,
                            mass_update, momentum_update, stabilisation_fields,
                            step)
from qnepb.diagnostics import energy_remainder, total_energy
from qnepb.discops import divergence, interface_density, laplacian
from qnepb.mesh import (BoundarySpec, FaceField, build_mesh, dual_average,
                        project_initial)


def _uniform_state(mesh, rho_value=1.0) -> State:
    rho = np.full(mesh.shape, rho_value)
    return State(t=0.0, rho=rho, u=FaceField.zeros(mesh),
                 phi=np.full(mesh.shape, np.log(rho_value)))


def _eta_inputs(rho, mesh, u=None, cap=None):
    rho_sigma = interface_density(rho, mesh, u, cap)
    rho_dual = dual_average(rho, mesh)
    return rho_sigma, rho_dual


def test_config_validation():
    bc = closed_bc(1)
    SchemeConfig(eps=0.0, bc=bc)  # the limit value is allowed
    with pytest.raises(ValueError):
        SchemeConfig(eps=-1.0, bc=bc)
    with pytest.raises(ValueError):
        SchemeConfig(eps=1.0, bc=bc, gamma=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(eps=1.0, bc=bc, theta_cfl=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(eps=1.0, bc=bc, dt_max=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(eps=1.0, bc=bc, donor_cap=0.5)
    with pytest.raises(ValueError):
        SchemeConfig(eps=1.0, bc=BoundarySpec.make(1, velocity="periodic"))


def test_eta_uniform_value():
    m = line_mesh(10)
    rho = np.ones(10)
    eta = eta_field(rho, *_eta_inputs(rho, m), gamma=1.01)
    sel = m.interior_faces(0)
    np.testing.assert_allclose(eta[0][sel], 1.01 * 1.25, rtol=1e-14)
    assert eta[0][0] == 0.0 and eta[0][-1] == 0.0


def test_eta_two_value_formula():
    m = line_mesh(2)
    rho = np.array([1.0, np.e])
    eta = eta_field(rho, *_eta_inputs(rho, m), gamma=1.01)
    expect = 1.01 * 5.0 * (np.e - 1.0) ** 2 / (2.0 * (1.0 + np.e))
    assert eta[0][1] == pytest.approx(expect, rel=1e-13)


def test_eta_rejects_nonpositive_density():
    m = line_mesh(4)
    rho = np.array([1.0, 1.0, -1.0, 1.0])
    good = np.abs(rho)
    with pytest.raises(ValueError):
        eta_field(rho, *_eta_inputs(good, m), gamma=1.01)


def test_implicit_solve_uniform_fixed_point():
    m = line_mesh(12)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    st = _uniform_state(m, 3.0)
    rho_sigma, rho_dual = _eta_inputs(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, rho_dual, cfg.gamma)
    phi = implicit_potential_solve(st, 0.01, eta, cfg, m)
    np.testing.assert_allclose(phi, np.log(3.0), atol=1e-10)


def test_implicit_solve_residual_contract(rng):
    m = build_mesh(((0.0, 2.0 * np.pi),), (40,))
    bc = periodic_phi_bc(1)
    cfg = SchemeConfig(eps=0.5, bc=bc)
    st = random_state(m, rng, rho_span=(0.5, 2.0), u_span=0.5)
    dt = 1e-3
    rho_sigma = interface_density(st.rho, m, st.u, cfg.donor_cap)
    rho_dual = dual_average(st.rho, m)
    eta = eta_field(st.rho, rho_sigma, rho_dual, cfg.gamma)
    phi = implicit_potential_solve(st, dt, eta, cfg, m, rho_sigma)

    coeff = FaceField((cfg.eps ** 2 + eta[0] * dt * dt,))
    conv = FaceField((m.face_area[0] * rho_sigma[0] * st.u[0],))
    div_conv = (conv[0][1:] - conv[0][:-1]) / m.cell_vol
    resid = (-laplacian(phi, m, bc.potential, coeff=coeff) + np.exp(phi)
             - (st.rho - dt * div_conv))
    assert float(np.max(np.abs(resid))) <= 1e-10 * float(np.max(st.rho)) * 10


def test_mass_update_uniform_and_conservation(rng):
    m = line_mesh(30)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    st = _uniform_state(m, 2.0)
    rho_sigma, rho_dual = _eta_inputs(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, rho_dual, cfg.gamma)
    phi = implicit_potential_solve(st, 0.01, eta, cfg, m)
    rho_new = mass_update(st, phi, eta, 0.01, cfg, m)
    np.testing.assert_allclose(rho_new, 2.0, atol=1e-11)

    st2 = random_state(m, rng, u_span=0.3)
    dt = 1e-3
    rho_sigma = interface_density(st2.rho, m, st2.u, cfg.donor_cap)
    eta = eta_field(st2.rho, rho_sigma, dual_average(st2.rho, m), cfg.gamma)
    phi = implicit_potential_solve(st2, dt, eta, cfg, m, rho_sigma)
    rho_new = mass_update(st2, phi, eta, dt, cfg, m)
    m0 = float(np.sum(m.cell_vol * st2.rho))
    m1 = float(np.sum(m.cell_vol * rho_new))
    assert abs(m1 - m0) <= 1e-13 * m0


def test_mass_update_elimination_identity(rng):
    # The explicit mass update and the elliptic substitution define the
    # same new density: rho_new = e^phi - div(eps^2 grad phi).
    m = line_mesh(25)
    cfg = SchemeConfig(eps=0.7, bc=closed_bc(1))
    st = random_state(m, rng, u_span=0.2)
    dt = 2e-3
    rho_sigma = interface_density(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, dual_average(st.rho, m), cfg.gamma)
    phi = implicit_potential_solve(st, dt, eta, cfg, m, rho_sigma)
    rho_new = mass_update(st, phi, eta, dt, cfg, m)
    coeff = FaceField((np.full(m.face_shape(0), cfg.eps ** 2),))
    via_pb = np.exp(phi) - laplacian(phi, m, cfg.bc.potential, coeff=coeff)
    np.testing.assert_allclose(rho_new, via_pb, atol=1e-9)


def _diverging_kink_state(m):
    """Sharply diverging interior velocity that empties one cell when
    stepped far beyond the stable dt."""
    u = FaceField.zeros(m)
    u[0][4] = -0.5
    u[0][5] = 0.5
    return State(t=0.0, rho=np.ones(m.shape), u=u, phi=np.zeros(m.shape))


def test_mass_update_positivity_error_names_cell():
    m = line_mesh(10)
    bc = BoundarySpec.make(1, density="neumann_zero",
                           velocity="neumann_zero", potential="periodic")
    cfg = SchemeConfig(eps=1.0, bc=bc)
    st = _diverging_kink_state(m)
    rho_sigma = interface_density(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, dual_average(st.rho, m), cfg.gamma)
    dt = 0.3
    phi = implicit_potential_solve(st, dt, eta, cfg, m, rho_sigma)
    with pytest.raises(PositivityError) as err:
        mass_update(st, phi, eta, dt, cfg, m)
    assert "cell" in str(err.value)


def test_stabilisation_fields_shapes_and_lambda():
    m = line_mesh(6)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    u = FaceField.zeros(m)
    sel = m.interior_faces(0)
    u[0][sel] = 0.5
    st = State(t=0.0, rho=np.ones(6), u=u, phi=np.zeros(6))
    dt = 0.01
    rho_sigma = interface_density(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, dual_average(st.rho, m), cfg.gamma)
    fields = stabilisation_fields(st, st.phi, eta, dt, cfg, m)
    # Uniform interior velocity with no-slip walls: div u vanishes in
    # the interior, is nonzero in the two wall cells.
    h = 1.0 / 6.0
    np.testing.assert_allclose(fields.lam[1:-1], 0.0, atol=1e-15)
    assert fields.lam[0] == pytest.approx(dt * 0.5 / h, rel=1e-13)
    assert fields.lam[-1] == pytest.approx(-dt * 0.5 / h, rel=1e-13)
    # Q = eta dt grad(phi) vanishes for flat phi and on external faces.
    np.testing.assert_allclose(fields.q_shift[0], 0.0, atol=1e-15)


@pytest.mark.parametrize("dim", [1, 2])
def test_dual_mass_balance_from_random_primal_fluxes(dim, rng):
    # Whenever the primal cells satisfy a conservative balance, the
    # half-half dual flux combination balances the dual cells exactly.
    for _ in range(100):
        if dim == 1:
            m = line_mesh(int(rng.integers(4, 20)))
        else:
            m = box_mesh(int(rng.integers(3, 9)), int(rng.integers(3, 9)))
        flux = FaceField.zeros(m)
        for axis in range(dim):
            sel = m.interior_faces(axis)
            flux[axis][sel] = rng.standard_normal(flux[axis][sel].shape)
        rho_old = rng.uniform(0.5, 2.0, size=m.shape)
        dt = 0.01
        out = np.zeros(m.shape)
        for axis in range(dim):
            lo = [slice(None)] * dim
            hi = [slice(None)] * dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            out += flux[axis][tuple(hi)] - flux[axis][tuple(lo)]
        rho_new = rho_old - dt * out / m.cell_vol

        d_old = dual_average(rho_old, m)
        d_new = dual_average(rho_new, m)
        scale = max(1.0, float(max(np.max(np.abs(flux[a]))
                                   for a in range(dim))))
        for axis in range(dim):
            dual = dual_fluxes(flux, m, axis)
            ones = np.ones(m.face_shape(axis))
            dual_div = _dual_convection(ones, dual, m, axis)
            sel = m.interior_faces(axis)
            resid = (m.dual_vol[axis][sel]
                     * (d_new[axis][sel] - d_old[axis][sel])
                     + dt * dual_div)
            assert float(np.max(np.abs(resid))) <= 1e-13 * scale


def test_dual_fluxes_constant_1d():
    m = line_mesh(5)
    flux = FaceField((np.full(6, 2.0),))
    dual = dual_fluxes(flux, m, 0)
    np.testing.assert_allclose(dual.axial, 2.0)
    assert dual.lateral is None


def test_momentum_uniform_fixed_point():
    m = line_mesh(9)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    st = _uniform_state(m, 1.5)
    dt = 0.01
    rho_sigma = interface_density(st.rho, m, st.u, cfg.donor_cap)
    eta = eta_field(st.rho, rho_sigma, dual_average(st.rho, m), cfg.gamma)
    phi = implicit_potential_solve(st, dt, eta, cfg, m, rho_sigma)
    fluxes = mass_fluxes(st, phi, eta, dt, cfg, m, rho_sigma)
    rho_new = mass_update(st, phi, eta, dt, cfg, m, fluxes)
    u_new = momentum_update(st, rho_new, phi, fluxes, dt, cfg, m, rho_sigma)
    np.testing.assert_allclose(u_new[0], 0.0, atol=1e-12)


def test_step_preserves_collision_symmetry():
    # Colliding streams: density stays even, velocity stays odd.
    m = build_mesh(((-0.2, 0.2),), (100,))
    bc = BoundarySpec.make(1, density="extrapolate_zero_order",
                           velocity="extrapolate_zero_order",
                           potential="periodic")
    cfg = SchemeConfig(eps=1e-2, bc=bc)
    # sign(-x) so that the face sitting exactly at x = 0 samples 0 and
    # the initial velocity is odd at machine precision.
    st = project_initial(m, lambda x: np.ones_like(x),
                         (lambda x: np.sign(-x),), bc, cfg.eps)
    new, diag = step(st, m, cfg)
    np.testing.assert_allclose(new.rho, new.rho[::-1], atol=1e-12)
    np.testing.assert_allclose(new.u[0], -new.u[0][::-1], atol=1e-12)


def test_compute_dt_advective_bound_and_scaling():
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1), theta_cfl=0.9)
    for n in (10, 20):
        m = line_mesh(n)
        u = FaceField.zeros(m)
        u[0][m.interior_faces(0)] = 1.0
        st = State(t=0.0, rho=np.ones(n), u=u, phi=np.zeros(n))
        h = 1.0 / n
        assert compute_dt(st, st.phi, cfg, m) \
            == pytest.approx(0.9 * h / 10.0, rel=1e-13)


def test_compute_dt_cap_and_positivity():
    m = line_mesh(10)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1), dt_max=1e-3)
    st = _uniform_state(m)
    assert compute_dt(st, st.phi, cfg, m) == 1e-3


def test_step_uniform_fixed_point_and_diagnostics():
    m = line_mesh(14)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    st = _uniform_state(m, 2.0)
    new, diag = step(st, m, cfg)
    np.testing.assert_allclose(new.rho, 2.0, atol=1e-10)
    np.testing.assert_allclose(new.u[0], 0.0, atol=1e-12)
    assert diag.t == new.t and diag.dt > 0.0
    assert diag.mass == pytest.approx(2.0, rel=1e-13)
    assert diag.min_rho == pytest.approx(2.0, rel=1e-10)
    assert diag.boundary_mass_flux == 0.0
    assert diag.qn_residual <= 1e-10
    assert diag.max_density_ratio == pytest.approx(1.0, abs=1e-10)


def test_step_supplied_dt_positivity_propagates():
    m = line_mesh(10)
    bc = BoundarySpec.make(1, density="neumann_zero",
                           velocity="neumann_zero", potential="periodic")
    cfg = SchemeConfig(eps=1.0, bc=bc)
    with pytest.raises(PositivityError):
        step(_diverging_kink_state(m), m, cfg, dt=0.3)


def test_step_energy_and_remainder_closed(rng):
    m = build_mesh(((0.0, 2.0 * np.pi),), (60,))
    bc = closed_bc(1)
    cfg = SchemeConfig(eps=1.0, bc=bc)
    st = project_initial(m, lambda x: np.exp(-((x - np.pi) ** 2)) / np.pi
                         + 0.05, (lambda x: np.sin(x) ** 3,), bc, cfg.eps)
    e_prev = total_energy(st, m, cfg.eps, bc).total
    e0 = abs(e_prev)
    for _ in range(25):
        new, diag = step(st, m, cfg)
        assert diag.e_total <= e_prev + 1e-10 * e0
        rem = energy_remainder(new.phi, st.phi, m, cfg.eps, bc)
        assert float(np.min(rem)) >= -1e-14 * max(1.0, float(np.max(rem)))
        e_prev = diag.e_total
        st = new


def test_step_mass_conserved_closed_2d(rng):
    m = box_mesh(12, 10)
    bc = closed_bc(2)
    cfg = SchemeConfig(eps=0.5, bc=bc)
    st = random_state(m, rng, rho_span=(0.5, 1.5), u_span=0.4)
    st = State(t=0.0, rho=st.rho, u=st.u,
               phi=implicit_potential_solve(
                   State(0.0, st.rho, FaceField.zeros(m), np.log(st.rho)),
                   1e-6, eta_field(st.rho,
                                   interface_density(st.rho, m),
                                   dual_average(st.rho, m), 1.01),
                   cfg, m))
    m0 = float(np.sum(m.cell_vol * st.rho))
    for _ in range(10):
        st, diag = step(st, m, cfg)
        assert st.rho.min() > 0.0
    assert abs(float(np.sum(m.cell_vol * st.rho)) - m0) <= 1e-11 * m0


def test_advance_to_lands_exactly():
    m = line_mesh(12)
    cfg = SchemeConfig(eps=1.0, bc=closed_bc(1))
    st = _uniform_state(m)
    out = advance_to(st, m, cfg, 0.25)
    assert out.t == pytest.approx(0.25, abs=1e-12)
