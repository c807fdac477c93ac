"""
Reference quadrature rules and the modal basis
"""
import numpy as np
import pytest

from models.basis import basis_size, reference_basis
from models.quadrature import monomial_integral, segment_rule, triangle_rule


@pytest.mark.parametrize('order', [0, 1, 2, 5, 8, 12])
def test_triangle_rule_is_exact_up_to_its_order(order):
    rule = triangle_rule(order)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            value = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert value == pytest.approx(monomial_integral(a, b), rel=1e-12, abs=1e-15)


def test_triangle_rule_points_lie_in_the_triangle():
    points = triangle_rule(9).points
    assert np.all(points >= 0.0)
    assert np.all(points.sum(axis=1) <= 1.0)


@pytest.mark.parametrize('npoints', [1, 2, 4, 7])
def test_segment_rule(npoints):
    rule = segment_rule(npoints)
    assert rule.order == 2 * npoints - 1
    for k in range(rule.order + 1):
        assert rule.weights @ rule.points ** k == pytest.approx(1.0 / (k + 1), rel=1e-13)


@pytest.mark.parametrize('degree', [0, 1, 3, 6])
def test_reference_basis_is_orthonormal(degree):
    rule = triangle_rule(2 * degree)
    values = reference_basis().values(rule.points, degree)
    assert values.shape == (rule.size, basis_size(degree))
    mass = (values * rule.weights[:, None]).T @ values
    np.testing.assert_allclose(mass, np.eye(basis_size(degree)), atol=1e-12)


def test_reference_basis_is_hierarchical():
    points = triangle_rule(6).points
    high = reference_basis().values(points, 4)
    np.testing.assert_allclose(high[:, :basis_size(2)], reference_basis().values(points, 2), atol=1e-13)


def test_degree_above_the_limit_is_rejected():
    basis = reference_basis()
    with pytest.raises(ValueError):
        basis.values(np.zeros((1, 2)), basis.max_degree + 1)
