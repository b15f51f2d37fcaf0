"""
線形ソルバーのテスト
"""

import numpy as np
import pytest
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import cg

from src.assembly import SparseSym, assemble
from src.linsolve import (
    SingularMatrixError,
    SolverError,
    cg_solve,
    default_maxit,
    dense_solve,
    solve,
)
from src.mesh import build_dof_map, uniform_mesh, unit_domain
from src.quadrature import gauss_rule


@pytest.fixture
def spd_matrix():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(30, 30))
    s = m @ m.T
    return sparse.csr_matrix(0.5 * (s + s.T) + 30 * np.eye(30))


@pytest.fixture
def stiffness():
    mesh = uniform_mesh(unit_domain(2), (6, 6))
    return assemble(mesh, build_dof_map(mesh), gauss_rule(4))


class TestCG:
    """前処理付きCG"""

    def test_converges(self, spd_matrix):
        b = np.arange(30, dtype=float)
        x, report = cg_solve(spd_matrix, b, tol=1e-12)
        assert np.linalg.norm(spd_matrix @ x - b) <= 1e-10 * np.linalg.norm(b)
        assert report.iterations > 0
        assert report.residual <= 1e-10
        assert report.method == "cg"

    def test_stiffness_matrix(self, stiffness):
        b = np.ones(stiffness.n)
        x, report = cg_solve(stiffness, b, tol=1e-10)
        expected = np.linalg.solve(stiffness.to_dense(), b)
        np.testing.assert_allclose(x, expected, rtol=0, atol=1e-5 * np.abs(expected).max())
        assert report.iterations <= default_maxit(stiffness.n)

    def test_zero_right_hand_side(self, spd_matrix):
        x, report = cg_solve(spd_matrix, np.zeros(30))
        assert np.all(x == 0)
        assert report.iterations == 0

    def test_not_converged_keeps_iterate(self, stiffness):
        with pytest.raises(SolverError) as excinfo:
            cg_solve(stiffness, np.ones(stiffness.n), tol=1e-14, maxit=1)
        assert excinfo.value.x is not None
        assert excinfo.value.report.iterations == 1

    def test_not_converged_returns_best_iterate(self, stiffness):
        b = np.ones(stiffness.n)
        with pytest.raises(SolverError) as excinfo:
            cg_solve(stiffness, b, tol=1e-14, maxit=8)
        diagonal = stiffness.diagonal()
        last, _ = cg(stiffness.matrix, b, rtol=1e-14, atol=0.0, maxiter=8, M=sparse.diags(1.0 / diagonal))

        def relative(x):
            return np.linalg.norm(b - stiffness.matvec(x)) / np.linalg.norm(b)

        best = excinfo.value.x
        assert relative(best) <= relative(last) * (1 + 1e-12)
        assert excinfo.value.report.residual == pytest.approx(relative(best))
        assert excinfo.value.report.residual <= 1.0

    def test_nonpositive_diagonal(self):
        A = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(SolverError):
            cg_solve(A, np.ones(2))

    def test_dimension_mismatch(self, spd_matrix):
        with pytest.raises(ValueError):
            cg_solve(spd_matrix, np.ones(29))

    def test_invalid_tolerance(self, spd_matrix):
        with pytest.raises(ValueError):
            cg_solve(spd_matrix, np.ones(30), tol=0.0)


class TestDense:
    """密行列ソルバー"""

    def test_hilbert(self):
        H = scipy.linalg.hilbert(4)
        x = dense_solve(H, H @ np.ones(4))
        np.testing.assert_allclose(x, np.ones(4), rtol=1e-9)

    def test_sparse_input(self, stiffness):
        b = np.ones(stiffness.n)
        x = dense_solve(stiffness, b)
        np.testing.assert_allclose(stiffness.matvec(x), b, rtol=1e-8, atol=1e-10)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            dense_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))


class TestSolve:
    """ソルバーの選択"""

    def test_methods_agree(self, stiffness):
        b = np.linspace(0.0, 1.0, stiffness.n)
        x_cg, _ = solve(stiffness, b, method="cg", tol=1e-12)
        x_dense, report = solve(stiffness, b, method="dense")
        assert report.iterations == 0
        assert report.method == "dense"
        np.testing.assert_allclose(x_cg, x_dense, rtol=0, atol=1e-6 * np.abs(x_dense).max())

    def test_unknown_method(self, spd_matrix):
        with pytest.raises(ValueError):
            solve(spd_matrix, np.ones(30), method="gmres")


@pytest.mark.parametrize("n,expected", [(100, 500), (1, 50), (0, 50), (2, 71)])
def test_default_maxit(n, expected):
    assert default_maxit(n) == expected


def test_sparse_sym_wrapper(spd_matrix):
    wrapped = SparseSym(spd_matrix)
    assert wrapped.n == 30
    assert wrapped.is_symmetric()
    x = np.ones(30)
    assert wrapped.quadratic_form(x) == pytest.approx(float(x @ (spd_matrix @ x)))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
