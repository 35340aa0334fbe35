import numpy as np
import pytest
import sympy

from hwgmfem import ProblemSpec, example1, example2, get_problem
from hwgmfem.problems import check_alpha_spd, polynomial_problem, validate

PI = np.pi


def _symbolic_f(kappa, u):
    x, y = sympy.symbols("x y")
    ue = u(x, y)
    k = kappa(x, y)
    f = -(sympy.diff(k * sympy.diff(ue, x), x) + sympy.diff(k * sympy.diff(ue, y), y))
    return sympy.lambdify((x, y), f, "numpy")


def test_example1_point_values():
    p = example1()
    assert p.exact_u(0.5, 0.5) == pytest.approx(1.0)
    np.testing.assert_allclose(p.exact_q(np.array(0.5), np.array(0.5)), [0, 0], atol=1e-15)


def test_example1_source_matches_symbolic():
    f_sym = _symbolic_f(lambda x, y: (1 + x) * (1 + y),
                        lambda x, y: sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y))
    p = example1()
    assert p.f(0.25, 0.25) == pytest.approx(f_sym(0.25, 0.25), rel=1e-14)
    pts = np.random.default_rng(3).uniform(0, 1, size=(50, 2))
    np.testing.assert_allclose(p.f(pts[:, 0], pts[:, 1]), f_sym(pts[:, 0], pts[:, 1]), rtol=1e-12, atol=1e-12)


def test_example1_source_matches_finite_differences():
    p = example1()
    x, y, s = 0.25, 0.25, 1e-5
    q = p.exact_q
    div = ((q(np.array(x + s), np.array(y))[0] - q(np.array(x - s), np.array(y))[0])
           + (q(np.array(x), np.array(y + s))[1] - q(np.array(x), np.array(y - s))[1])) / (2 * s)
    assert div == pytest.approx(p.f(x, y), rel=1e-8)


def test_example2_values():
    p = example2()
    x = np.array([0.1, 0.3, 0.7])
    y = np.array([0.2, 0.45, 0.9])
    np.testing.assert_allclose(p.f(x, y) / p.exact_u(x, y), 2 * PI ** 2)
    np.testing.assert_allclose(p.exact_q(np.array(0.0), np.array(0.0)), [-PI, 0.0], atol=1e-15)
    t = np.linspace(0, 1, 7)
    np.testing.assert_allclose(p.g(t, np.zeros_like(t)), np.sin(PI * t))


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_constitutive_identity(name):
    p = get_problem(name)
    pts = np.random.default_rng(1).uniform(0, 1, size=(200, 2))
    x, y = pts[:, 0], pts[:, 1]
    aq = np.einsum("nij,nj->ni", p.alpha_matrix(x, y), p.exact_q(x, y))
    assert np.abs(aq + p.exact_grad_u(x, y)).max() <= 1e-12
    assert np.all(p.alpha_matrix(x, y)[:, 0, 0] > 0)
    check_alpha_spd(p, x, y)


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_validate_examples(name):
    rep = validate(get_problem(name), samples=100)
    assert rep.samples == 100
    assert rep.max_residual <= 1e-6


def test_validate_reports_mismatch():
    p = example2()
    bad = ProblemSpec(alpha=p.alpha, f=lambda x, y: np.zeros_like(x), g=p.g,
                      exact_u=p.exact_u, exact_q=p.exact_q, name="bad")
    rep = validate(bad, samples=100)
    assert rep.divergence_residual == pytest.approx(2 * PI ** 2, rel=0.05)
    assert rep.constitutive_residual <= 1e-6


def test_alpha_not_spd_names_point():
    p = ProblemSpec(alpha=lambda x, y: x - 0.5, f=lambda x, y: 0 * x, g=lambda x, y: 0 * x)
    with pytest.raises(ValueError, match=r"\(0\.1"):
        check_alpha_spd(p, np.array([0.9, 0.1]), np.array([0.5, 0.5]))


def test_tensor_alpha_shape():
    mat = np.array([[2.0, 0.5], [0.5, 1.0]])
    p = ProblemSpec(alpha=lambda x, y: np.broadcast_to(mat, np.shape(x) + (2, 2)),
                    f=lambda x, y: 0 * x, g=lambda x, y: 0 * x)
    np.testing.assert_array_equal(p.alpha_matrix(np.zeros(3), np.zeros(3))[1], mat)


def test_polynomial_problem_and_registry():
    p = polynomial_problem(lambda x, y: x * x, lambda x, y: np.stack([2 * x, 0 * y], axis=-1), laplacian=2.0)
    assert p.f(np.array(0.3), np.array(0.1)) == pytest.approx(-2.0)
    assert get_problem("zero").f(np.array(0.2), np.array(0.2)) == 0.0
    with pytest.raises(ValueError, match="unknown problem"):
        get_problem("ex9")
