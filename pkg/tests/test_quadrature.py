import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncfem.quadrature import (quad_edge, quad_triangle,
                              reference_triangle_monomial_integral)


def test_constant_on_reference_triangle():
    rule = quad_triangle(1)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_linear_monomial():
    rule = quad_triangle(2)
    val = sum(w * p[1] for p, w in zip(rule.points, rule.weights))
    assert val == pytest.approx(1 / 6, abs=1e-15)


def test_degree4_x2y2():
    rule = quad_triangle(4)
    val = sum(w * p[1] ** 2 * p[2] ** 2 for p, w in zip(rule.points, rule.weights))
    assert abs(val - 1 / 180) < 1e-14


@pytest.mark.parametrize("degree", range(1, 7))
def test_monomial_exactness(degree):
    rule = quad_triangle(degree)
    assert rule.exact_degree >= degree
    assert (rule.weights > 0).all()
    x, y = rule.points[:, 1], rule.points[:, 2]
    for p in range(rule.exact_degree + 1):
        for q in range(rule.exact_degree + 1 - p):
            val = (rule.weights * x ** p * y ** q).sum()
            assert val == pytest.approx(
                reference_triangle_monomial_integral(p, q), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_random_polynomial_exactness(degree, seed):
    rng = np.random.default_rng(seed)
    rule = quad_triangle(degree)
    d = rule.exact_degree
    coeffs = {(p, q): rng.standard_normal()
              for p in range(d + 1) for q in range(d + 1 - p)}
    x, y = rule.points[:, 1], rule.points[:, 2]
    val = sum(c * (rule.weights * x ** p * y ** q).sum()
              for (p, q), c in coeffs.items())
    exact = sum(c * reference_triangle_monomial_integral(p, q)
                for (p, q), c in coeffs.items())
    assert val == pytest.approx(exact, abs=1e-12)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        quad_triangle(7)
    with pytest.raises(ValueError):
        quad_triangle(0)


def test_edge_rule_basics():
    r = quad_edge(0)
    assert (r.weights * np.ones_like(r.points)).sum() == pytest.approx(1.0)
    r = quad_edge(1)
    assert (r.weights * r.points).sum() == pytest.approx(0.5)


def test_edge_rule_quartic():
    r = quad_edge(4)
    assert (r.weights * r.points ** 4).sum() == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("degree", range(0, 13))
def test_edge_rule_exactness(degree):
    r = quad_edge(degree)
    assert r.exact_degree >= degree
    for p in range(r.exact_degree + 1):
        assert (r.weights * r.points ** p).sum() == pytest.approx(
            1.0 / (p + 1), abs=1e-13)
