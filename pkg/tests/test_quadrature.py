"""
Gauss–Legendre求積のテスト
"""

from fractions import Fraction

import numpy as np
import pytest

from src.polyq import Box, RationalPoly, evaluate_arrays
from src.quadrature import MAX_POINTS, QuadratureError, gauss_rule, integrate_cell, tensor_rule


class TestGaussRule:
    """1次元則"""

    def test_two_point_rule(self):
        rule = gauss_rule(2)
        np.testing.assert_allclose(rule.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1.0, 1.0], atol=1e-15)

    def test_three_point_rule(self):
        rule = gauss_rule(3)
        np.testing.assert_allclose(rule.nodes, [-np.sqrt(0.6), 0.0, np.sqrt(0.6)], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [5 / 9, 8 / 9, 5 / 9], atol=1e-15)

    @pytest.mark.parametrize("n", [1, 4, 7, 16])
    def test_weights_sum_to_two(self, n):
        rule = gauss_rule(n)
        assert rule.weights.sum() == pytest.approx(2.0, abs=1e-14)
        assert np.all(rule.weights > 0)
        assert np.all(np.diff(rule.nodes) > 0)

    @pytest.mark.parametrize("n", [1, 2, 5, 8])
    def test_exact_up_to_degree(self, n):
        rule = gauss_rule(n)
        for k in range(rule.exact_degree + 1):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert np.dot(rule.weights, rule.nodes ** k) == pytest.approx(exact, abs=1e-13)

    @pytest.mark.parametrize("n", [0, MAX_POINTS + 1, -3])
    def test_out_of_range(self, n):
        with pytest.raises(QuadratureError):
            gauss_rule(n)

    def test_cached(self):
        assert gauss_rule(5) is gauss_rule(5)


class TestTensorRule:
    """テンソル積則"""

    def test_shapes_and_weight_sum(self):
        points, weights = tensor_rule(gauss_rule(3), 3)
        assert points.shape == (27, 3)
        assert weights.sum() == pytest.approx(8.0)

    def test_first_axis_slowest(self):
        points, _ = tensor_rule(gauss_rule(2), 2)
        assert points[0, 0] == points[1, 0]
        assert points[0, 1] != points[1, 1]


def test_integrate_cell_matches_exact_polynomial():
    box = Box.from_bounds((Fraction(1, 2), -1), (2, Fraction(1, 3)))
    x = RationalPoly.variable(2, 0)
    y = RationalPoly.variable(2, 1)
    p = x ** 3 * y ** 2 - 2 * x * y + 1
    exps, coefs = p.to_arrays()
    approx = integrate_cell(lambda pts: evaluate_arrays(exps, coefs, pts), box, gauss_rule(3))
    assert approx == pytest.approx(float(p.integrate_box(box)), rel=1e-13)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
