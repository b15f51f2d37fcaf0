"""
スカラー場と製造解のテスト
"""

from fractions import Fraction

import numpy as np
import pytest

from src.fields import (
    FieldFn,
    bilaplacian_of,
    bubble_polynomial,
    check_bilaplacian,
    check_gradient,
    load_polynomial_solution,
    manufactured_solution,
    parse_polynomial_text,
    sin_squared,
    solution_u1,
    solution_u2,
)
from src.polyq import RationalPoly


@pytest.fixture
def sample_points():
    rng = np.random.default_rng(0)
    return rng.uniform(0.05, 0.95, size=(12, 2))


class TestManufacturedSolutions:
    """製造解 u1, u2"""

    def test_u2_bilaplacian_is_constant_in_1d(self):
        f = bilaplacian_of(solution_u2(1))
        assert f.is_polynomial
        assert f.polynomial == RationalPoly.constant(1, 24)

    def test_u2_bilaplacian_at_center(self):
        f = bilaplacian_of(solution_u2(2))
        assert f(np.array([[0.5, 0.5]]))[0] == pytest.approx(5.0)

    def test_u2_vanishes_with_gradient_on_boundary(self):
        u = solution_u2(2)
        points = np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.2, 1.0]])
        np.testing.assert_allclose(u(points), 0.0, atol=1e-13)
        np.testing.assert_allclose(u.gradient(points), 0.0, atol=1e-13)

    def test_u1_values(self):
        u = solution_u1(2)
        assert u(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0)
        assert u(np.array([[0.25, 0.5]]))[0] == pytest.approx(0.5)
        assert not u.is_polynomial

    def test_sin_squared_first_derivative(self):
        t = np.array([0.25, 0.1])
        np.testing.assert_allclose(sin_squared(t, 1), np.pi * np.sin(2 * np.pi * t))

    @pytest.mark.parametrize("name", ["u1", "u2"])
    def test_derivative_consistency(self, name, sample_points):
        u = manufactured_solution(name, 2)
        assert check_gradient(u, sample_points) < 1e-8
        assert check_bilaplacian(u, bilaplacian_of(u), sample_points) < 1e-6

    def test_u1_three_dimensional_bilaplacian(self):
        rng = np.random.default_rng(1)
        points = rng.uniform(0.1, 0.9, size=(5, 3))
        u = solution_u1(3)
        assert check_bilaplacian(u, bilaplacian_of(u), points) < 1e-6

    def test_unknown_solution(self):
        with pytest.raises(ValueError):
            manufactured_solution("u3", 2)

    def test_bubble_polynomial_degree(self):
        assert bubble_polynomial(3).axis_degrees() == (4, 4, 4)


class TestFieldFn:
    """場の評価"""

    def test_hessian_symmetric(self, sample_points):
        hess = solution_u1(2).hessian(sample_points)
        assert hess.shape == (12, 2, 2)
        np.testing.assert_array_equal(hess, hess.transpose(0, 2, 1))

    def test_point_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solution_u2(2)(np.zeros((3, 3)))

    def test_multi_index_length_mismatch(self):
        with pytest.raises(ValueError):
            solution_u2(2).derivative(np.zeros((1, 2)), (1,))

    def test_polynomial_bilaplacian_method(self):
        u = solution_u2(2)
        point = np.array([[0.3, 0.6]])
        assert u.bilaplacian(point)[0] == pytest.approx(bilaplacian_of(u)(point)[0])

    def test_separable_product(self):
        def linear(t, n):
            return t if n == 0 else (np.ones_like(t) if n == 1 else np.zeros_like(t))

        field = FieldFn.separable([linear, linear])
        point = np.array([[2.0, 3.0]])
        assert field(point)[0] == pytest.approx(6.0)
        np.testing.assert_allclose(field.gradient(point)[0], [3.0, 2.0])


class TestPolynomialText:
    """テキスト定義の多項式解"""

    def test_parse(self):
        poly = parse_polynomial_text("# 解\n1 2 0\n-1/2 0 1  # 末尾コメント\n\n", 2)
        assert poly.coefficient((2, 0)) == 1
        assert poly.coefficient((0, 1)) == Fraction(-1, 2)

    def test_repeated_terms_accumulate(self):
        poly = parse_polynomial_text("1 1\n2 1\n", 1)
        assert poly.coefficient((1,)) == 3

    @pytest.mark.parametrize("text", ["1 2\n", "1 -1 0\n", "a 1 1\n", "1/0 1 1\n"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_polynomial_text(text, 2)

    def test_load(self, tmp_path):
        path = tmp_path / "cubic.txt"
        path.write_text("3 3 1\n", encoding="utf-8")
        u = load_polynomial_solution(path, 2)
        assert u.name == "cubic"
        assert u(np.array([[2.0, 0.5]]))[0] == pytest.approx(12.0)

    def test_load_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_polynomial_solution(tmp_path / "none.txt", 2)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
