"""Discrete gradient/divergence/Laplacian, duality, interface density."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import box_mesh, line_mesh, random_interior_face_field
from qnepb.discops import (divergence, duality_residual, gradient,
                           half_distance, interface_density, laplacian,
                           log_mean)
from qnepb.mesh import BCSide, BoundarySpec, FaceField, build_mesh


def _neumann(dim):
    return BoundarySpec.make(dim).potential


def _periodic(dim):
    return BoundarySpec.make(dim, potential="periodic").potential


def test_gradient_constant_is_zero():
    m = box_mesh(5, 4)
    g = gradient(np.full(m.shape, 2.5), m, _neumann(2))
    for axis in range(2):
        np.testing.assert_allclose(g[axis], 0.0)


def test_gradient_linear_field_1d():
    m = line_mesh(10)
    g = gradient(m.centers[0].copy(), m, _neumann(1))
    sel = m.interior_faces(0)
    np.testing.assert_allclose(g[0][sel], 1.0, rtol=1e-14)
    assert g[0][0] == 0.0 and g[0][-1] == 0.0


def test_gradient_periodic_sine_antisymmetric():
    n = 32
    m = build_mesh(((0.0, 2.0 * np.pi),), (n,))
    q = np.sin(m.centers[0])
    g = gradient(q, m, _periodic(1))[0]
    h = 2.0 * np.pi / n
    # Wraparound face: (q_0 - q_last)/h on both end faces.
    expect = (q[0] - q[-1]) / h
    assert g[0] == pytest.approx(expect, rel=1e-13)
    assert g[-1] == pytest.approx(expect, rel=1e-13)
    # The cell samples are antisymmetric about pi, so the face values
    # (including the wrap) are antisymmetric under x -> 2 pi - x up to
    # the sign flip of the derivative's symmetry: g(x) = g(2 pi - x).
    np.testing.assert_allclose(g, g[::-1], atol=1e-13)


def test_gradient_dirichlet_one_sided():
    m = line_mesh(4)
    q = np.array([1.0, 2.0, 3.0, 4.0])
    bc = ((BCSide("dirichlet", 0.0), BCSide("neumann_zero")),)
    g = gradient(q, m, bc)[0]
    # Half-cell distance 0.125 at the wall.
    assert g[0] == pytest.approx((1.0 - 0.0) / 0.125, rel=1e-14)
    assert g[-1] == 0.0


def test_divergence_telescopes_and_linear_field():
    m = line_mesh(8)
    v = random_interior_face_field(m, np.random.default_rng(7))
    d = divergence(v, m)
    assert float(np.sum(m.cell_vol * d)) == pytest.approx(0.0, abs=1e-14)
    v_lin = FaceField((m.faces[0].copy(),))
    np.testing.assert_allclose(divergence(v_lin, m), 1.0, rtol=1e-13)


def test_divergence_2d_uniform_flow_interior():
    m = box_mesh(6, 5)
    v = FaceField((np.ones(m.face_shape(0)), np.zeros(m.face_shape(1))))
    d = divergence(v, m)
    np.testing.assert_allclose(d, 0.0, atol=1e-14)


def test_laplacian_constant_and_bump_stencil():
    m = line_mesh(8)
    np.testing.assert_allclose(
        laplacian(np.full(8, 4.0), m, _neumann(1)), 0.0, atol=1e-13)
    q = np.zeros(8)
    q[3] = 1.0
    lap = laplacian(q, m, _neumann(1))
    h = 1.0 / 8.0
    np.testing.assert_allclose(lap[2:5], np.array([1.0, -2.0, 1.0]) / h ** 2,
                               rtol=1e-13)
    np.testing.assert_allclose(lap[:2], 0.0, atol=1e-13)


def test_laplacian_coefficient_scaling_and_error():
    m = line_mesh(6)
    q = np.sin(m.centers[0])
    c = FaceField((np.full(m.face_shape(0), 3.0),))
    np.testing.assert_allclose(laplacian(q, m, _neumann(1), coeff=c),
                               3.0 * laplacian(q, m, _neumann(1)),
                               rtol=1e-13)
    bad = FaceField((np.zeros(m.face_shape(0)),))
    with pytest.raises(ValueError):
        laplacian(q, m, _neumann(1), coeff=bad)


def test_laplacian_symmetric_bilinear_form(rng):
    m = box_mesh(6, 7)
    p = rng.standard_normal(m.shape)
    q = rng.standard_normal(m.shape)
    bc = _neumann(2)
    a_pq = float(np.sum(m.cell_vol * p * laplacian(q, m, bc)))
    a_qp = float(np.sum(m.cell_vol * q * laplacian(p, m, bc)))
    scale = max(abs(a_pq), abs(a_qp), 1.0)
    assert abs(a_pq - a_qp) <= 1e-12 * scale


@pytest.mark.parametrize("dim", [1, 2])
def test_duality_identity_random_trials(dim, rng):
    for trial in range(100):
        if dim == 1:
            m = line_mesh(int(rng.integers(4, 24)))
        else:
            m = box_mesh(int(rng.integers(3, 12)), int(rng.integers(3, 12)))
        q = rng.standard_normal(m.shape)
        v = random_interior_face_field(m, rng)
        scale = (np.max(np.abs(q)) * max(np.max(np.abs(v[a]))
                                         for a in range(dim))
                 * float(np.sum(m.cell_vol)))
        assert abs(duality_residual(q, v, m)) <= 1e-12 * max(scale, 1e-30)


def test_duality_constant_exact_zero():
    m = line_mesh(9)
    v = random_interior_face_field(m, np.random.default_rng(3))
    assert duality_residual(np.full(9, 2.0), v, m) == 0.0


def test_log_mean_values():
    assert log_mean(2.0, 2.0) == 2.0
    assert log_mean(1.0, np.e) == pytest.approx(np.e - 1.0, rel=1e-14)
    assert log_mean(np.e, 1.0) == pytest.approx(np.e - 1.0, rel=1e-14)


def test_log_mean_near_equal_branch():
    val = log_mean(1.0, 1.0 + 1e-14)
    assert val == pytest.approx(1.0, abs=1e-13)
    # Defining identity rho_KL (ln a - ln b) = a - b holds through the
    # switch region.
    for d in (1e-6, 1e-9, 1e-12):
        a, b = 1.0, 1.0 + d
        identity = log_mean(a, b) * (np.log(a) - np.log(b)) - (a - b)
        assert abs(identity) <= 1e-15


def test_log_mean_bounds_and_monotone(rng):
    a = rng.uniform(0.1, 5.0, size=200)
    b = rng.uniform(0.1, 5.0, size=200)
    lm = log_mean(a, b)
    assert np.all(lm >= np.minimum(a, b) - 1e-14)
    assert np.all(lm <= 0.5 * (a + b) + 1e-14)
    assert np.all(log_mean(a + 0.5, b) >= lm)


def test_interface_density_interior_log_mean():
    m = line_mesh(3)
    rho = np.array([1.0, np.e, np.e])
    face = interface_density(rho, m)[0]
    assert face[1] == pytest.approx(np.e - 1.0, rel=1e-14)
    assert face[2] == pytest.approx(np.e, rel=1e-14)
    assert face[0] == rho[0] and face[-1] == rho[-1]


def test_interface_density_rejects_nonpositive():
    m = line_mesh(3)
    with pytest.raises(ValueError):
        interface_density(np.array([1.0, -1.0, 1.0]), m)


def test_interface_density_donor_cap_inactive_for_mild_ratios():
    m = line_mesh(3)
    rho = np.array([1.0, 2.0, 0.5])
    u = FaceField((np.array([0.0, 1.0, -1.0, 0.0]),))
    plain = interface_density(rho, m)
    capped = interface_density(rho, m, u, 8.0)
    np.testing.assert_array_equal(plain[0], capped[0])


def test_interface_density_donor_cap_active_upwind():
    m = line_mesh(2)
    rho = np.array([1e-6, 1.0])
    cap = 8.0
    u_pos = FaceField((np.array([0.0, 1.0, 0.0]),))
    face = interface_density(rho, m, u_pos, cap)[0]
    assert face[1] == pytest.approx(cap * 1e-6, rel=1e-14)
    u_neg = FaceField((np.array([0.0, -1.0, 0.0]),))
    face = interface_density(rho, m, u_neg, cap)[0]
    assert face[1] == pytest.approx(log_mean(1e-6, 1.0), rel=1e-14)
    u_zero = FaceField((np.zeros(3),))
    face = interface_density(rho, m, u_zero, cap)[0]
    assert face[1] == pytest.approx(cap * 1e-6, rel=1e-14)


def test_half_distance_uniform():
    m = line_mesh(4)
    hd = half_distance(m, 0)
    np.testing.assert_allclose(hd, [0.125, 0.25, 0.25, 0.25, 0.125])
