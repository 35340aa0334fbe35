import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hwgmfem import gen_quad_family, gen_triangular
from hwgmfem.basis import (
    CellBasis,
    cell_quadrature,
    dim_poly,
    edge_basis_values,
    edge_quadrature,
    edge_reference_mass,
    gauss_legendre_01,
    monomial_exponents,
    triangle_rule,
)
from hwgmfem.local_ops import CellBatch

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [2.0, 0.2], [2.4, 1.5], [1.0, 2.2], [-0.3, 1.1]])


def green_monomial(poly, a, b):
    """Exact integral of x^a y^b over a polygon via the boundary integral of x^(a+1) y^b / (a+1) dy."""
    t, w = np.polynomial.legendre.leggauss(a + b + 2)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = 0.0
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        total += np.sum(w * x ** (a + 1) * y ** b) / (a + 1) * (q[1] - p[1])
    return total


def test_dim_and_exponents():
    assert [dim_poly(m) for m in range(4)] == [1, 3, 6, 10]
    assert monomial_exponents(2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_unit_square_area():
    r = cell_quadrature(SQUARE, 2)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_right_triangle_first_moment():
    r = cell_quadrature(TRIANGLE, 1)
    assert np.sum(r.weights * r.points[:, 0]) == pytest.approx(1 / 6, abs=1e-15)


def test_square_x3y3():
    r = cell_quadrature(SQUARE, 6)
    val = np.sum(r.weights * r.points[:, 0] ** 3 * r.points[:, 1] ** 3)
    assert abs(val - 1 / 16) <= 1e-12


@pytest.mark.parametrize("poly", [SQUARE, TRIANGLE, PENTAGON])
@pytest.mark.parametrize("degree", [0, 3, 6, 9])
def test_cell_rule_exactness(poly, degree):
    r = cell_quadrature(poly, degree)
    area = green_monomial(poly, 0, 0)
    assert abs(r.weights.sum() - area) <= 1e-13 * area
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = green_monomial(poly, a, b)
            got = np.sum(r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


@pytest.mark.parametrize("degree", range(0, 12))
def test_reference_triangle_rule(degree):
    pts, wts = triangle_rule(degree)
    assert wts.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(wts > 0)
    # reference triangle (0,0),(1,0),(0,1) with weights normalized to area 1
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = 2 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b)
            assert abs(got - exact) <= 1e-13


def test_edge_rules():
    r = edge_quadrature([0, 0], [2, 0], 0)
    assert r.weights.sum() == pytest.approx(2.0)
    r = edge_quadrature([0, 0], [1, 0], 2)
    assert np.sum(r.weights * r.points[:, 0] ** 2) == pytest.approx(1 / 3, abs=1e-15)
    r = edge_quadrature([0, 0], [0, 1], 1)
    assert np.sum(r.weights * r.points[:, 1]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("degree", range(0, 10))
def test_gauss_legendre_exactness(degree):
    t, w = gauss_legendre_01(degree)
    for p in range(degree + 1):
        assert abs(np.sum(w * t ** p) - 1 / (p + 1)) <= 1e-14


def test_degenerate_fan_rejected():
    with pytest.raises(ValueError):
        cell_quadrature(np.array([[0, 0], [4, 0], [4, 4], [3.9, 0.1], [0.1, 0.1]]), 2)


def test_cell_basis_at_centroid():
    b = CellBasis(1, np.array([0.3, 0.4]), 0.5)
    v = b.values(np.array([0.3, 0.4]), 2)
    np.testing.assert_array_equal(v, [1, 0, 0, 0, 0, 0])
    g = b.grads(np.array([[0.1, 0.9], [0.7, 0.2]]), 2)
    np.testing.assert_array_equal(g[:, 0, :], 0.0)


def test_cell_basis_gradient_matches_finite_differences(rng):
    b = CellBasis(2, np.array([0.2, -0.1]), 0.7)
    x = rng.uniform(-0.5, 0.5, size=(5, 2))
    step = 1e-6
    fd = np.stack([(b.values(x + [step, 0], 3) - b.values(x - [step, 0], 3)) / (2 * step),
                   (b.values(x + [0, step], 3) - b.values(x - [0, step], 3)) / (2 * step)], axis=-1)
    np.testing.assert_allclose(b.grads(x, 3), fd, atol=1e-7)


def test_edge_basis():
    t = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(edge_basis_values(t, 2), [[1, -0.5, 0.25], [1, 0, 0], [1, 0.5, 0.25]])
    G = edge_reference_mass(2)
    np.testing.assert_allclose(G, [[1, 0, 1 / 12], [0, 1 / 12, 0], [1 / 12, 0, 1 / 80]])


@pytest.mark.parametrize("k", [0, 1, 2])
def test_mass_conditioning_is_h_independent(k):
    conds = []
    for mesh in [gen_triangular(2), gen_triangular(16), gen_quad_family(2, 4, 0.2)[-1]]:
        for _, cells in mesh.cell_groups().items():
            M = CellBatch(mesh, cells, k).mass(k + 1)
            eig = np.linalg.eigvalsh(M / M[:, :1, :1])
            assert np.all(eig > 0)
            conds.append(float((eig[:, -1] / eig[:, 0]).max()))
    assert max(conds) < 1e6


@settings(max_examples=20, deadline=None)
@given(coef=st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_projection_reproduces_polynomials(coef):
    mesh = gen_quad_family(2, 1, 0.2)[0]
    c = np.array(coef)

    def p(x, y):
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y

    batch = CellBatch(mesh, np.arange(mesh.n_cells), 1)
    coeffs = batch.project_scalar(p, 2)
    vals = np.einsum("nqi,ni->nq", batch.phi_1, coeffs)
    exact = p(batch.X[..., 0], batch.X[..., 1])
    assert np.abs(vals - exact).max() <= 1e-11 * max(1.0, np.abs(exact).max())
