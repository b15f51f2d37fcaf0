"""
収束検証の実行テスト
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from src.analysis import check_order_band
from src.assembly import NoFreeDofsError
from src.config_loader import RunConfig
from src.fields import FieldFn, bubble_polynomial, solution_u2
from src.mesh import format_mesh, graded_mesh, unit_domain, write_mesh_file
from src.polyq import RationalPoly
from src.study_runner import (
    build_mesh,
    consistency_rates,
    resolve_solution,
    run_identity19,
    run_leading_term,
    run_level,
    run_lower_bound,
    run_study,
    source_norm,
)


def make_config(**overrides) -> RunConfig:
    """密行列ソルバーを既定にしたテスト用設定"""
    values = {"command": "solve", "solver": "dense", "no_timing": True}
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture
def clamped_w():
    """境界で値と勾配が0になる滑らかな多項式 w = bubble・(1 + x - y/2)"""
    factor = RationalPoly(2, {(0, 0): 1, (1, 0): 1, (0, 1): Fraction(-1, 2)})
    return FieldFn.from_polynomial(bubble_polynomial(2) * factor, name="w")


class TestMeshAndSolution:
    """メッシュと厳密解の選択"""

    def test_uniform_by_default(self):
        mesh = build_mesh(make_config(d=3), 2)
        assert mesh.counts == (2, 2, 2)
        assert mesh.shape_regularity == pytest.approx(1.0)

    def test_jitter_gives_graded_mesh(self):
        mesh = build_mesh(make_config(jitter=0.3, seed=4), 6)
        assert mesh == graded_mesh(unit_domain(2), (6, 6), seed=4, jitter=0.3)

    def test_mesh_file_wins(self, tmp_path):
        path = tmp_path / "mesh.txt"
        write_mesh_file(graded_mesh(unit_domain(1), (5,), seed=1, jitter=0.2), path)
        mesh = build_mesh(make_config(mesh_file=str(path)), 99)
        assert format_mesh(mesh) == path.read_text(encoding="utf-8")

    def test_solution_file(self, tmp_path):
        path = tmp_path / "sol.txt"
        path.write_text("1 2 2\n", encoding="utf-8")
        u = resolve_solution(make_config(solution_file=str(path)))
        assert u.is_polynomial
        assert u.polynomial.coefficient((2, 2)) == 1

    def test_builtin_solution(self):
        assert resolve_solution(make_config(solution="u1"), d=3).dim == 3


class TestRunLevel:
    """1水準の求解"""

    def test_record(self, tmp_path):
        dump = tmp_path / "K.txt"
        config = make_config(interpolant=True, dump_matrix=str(dump))
        level = run_level(solution_u2(2), build_mesh(config, 4), config, N=4)
        record = level.record
        assert record.N == 4
        assert record.d == 2
        assert record.dofs == 27
        assert record.h == pytest.approx(np.sqrt(2) / 4)
        assert 0 < record.l2 < record.h1 < record.h2
        assert record.pi_h2 is not None and record.pi_h2 > 0
        assert level.report.seconds == 0.0
        assert dump.read_text(encoding="utf-8").startswith("27 ")

    def test_cg_matches_dense(self):
        dense = make_config()
        cg = make_config(solver="cg", tol=1e-12)
        mesh = build_mesh(dense, 4)
        a = run_level(solution_u2(2), mesh, dense)
        b = run_level(solution_u2(2), mesh, cg)
        assert b.record.h2 == pytest.approx(a.record.h2, rel=1e-6)
        assert b.report.iterations > 0

    def test_too_coarse(self):
        config = make_config(Ns=(1,))
        with pytest.raises(NoFreeDofsError):
            run_level(solution_u2(2), build_mesh(config, 1), config)

    def test_h2_error_ratio_between_levels(self):
        config = make_config()
        coarse = run_level(solution_u2(2), build_mesh(config, 4), config).record
        fine = run_level(solution_u2(2), build_mesh(config, 8), config).record
        assert 3.5 <= coarse.h2 / fine.h2 <= 4.5


class TestStudies:
    """複数水準の検証"""

    def test_run_study_orders(self):
        config = make_config(command="convergence", Ns=(8, 4))
        study = run_study(config)
        assert [level.record.N for level in study.levels] == [8, 4]
        assert [r.N for r in study.records] == [4, 8]
        assert 1.8 <= study.table.final_order("h2") <= 2.2

    def test_identity19(self):
        report = run_identity19(make_config(command="verify", Ns=(4,), identity19=True))
        assert report.residual < 1e-8

    def test_identity19_on_graded_mesh(self):
        config = make_config(command="verify", Ns=(5,), identity19=True, jitter=0.3, seed=2)
        assert run_identity19(config).residual < 1e-8


    def test_identity19_grows_with_solver_tolerance(self):
        residuals = []
        for tol in (1e-10, 1e-3, 1e-1):
            config = make_config(command="verify", Ns=(8,), identity19=True, solver="cg", tol=tol)
            residuals.append(run_identity19(config).residual)
        assert residuals[0] < residuals[1] < residuals[2]
        assert residuals[0] < 1e-8
        assert residuals[2] > 1e-8
    def test_leading_term(self):
        report = run_leading_term(make_config(command="verify", Ns=(8,), leading_term=True))
        assert report.energy > 0
        assert report.predicted > 0

    def test_lower_bound(self):
        report = run_lower_bound(make_config(command="verify", Ns=(4, 8, 16), lower_bound=True))
        assert report.passed, report.message
        assert report.Ns == (4, 8, 16)

    def test_source_norm(self):
        config = make_config(d=1)
        assert source_norm(solution_u2(1), build_mesh(config, 3), 4) == pytest.approx(24.0)

    def test_consistency_rates(self, clamped_w):
        rates = consistency_rates(solution_u2(2), clamped_w, make_config(), Ns=(8, 16))
        (n_coarse, coarse), (n_fine, fine) = rates
        assert (n_coarse, n_fine) == (8, 16)
        assert 3.0 <= coarse / fine <= 5.0

    def test_one_dimensional_consistency_vanishes(self):
        """d=1 は Hermite 3次（適合）なので整合性誤差はほぼ0"""
        w = FieldFn.from_polynomial(bubble_polynomial(1), name="w")
        config = make_config(d=1)
        for _, value in consistency_rates(solution_u2(1), w, config, Ns=(4,)):
            assert value < 1e-10


@pytest.mark.slow
class TestFineStudies:
    """細かいメッシュでの収束次数"""

    def test_two_dimensional_orders(self):
        study = run_study(make_config(command="convergence", Ns=(4, 8, 16, 32)))
        table = study.table
        for value in table.finest_orders("h2", 3):
            assert 1.8 <= value <= 2.2
        for value in table.finest_orders("h1", 3):
            assert 1.8 <= value <= 2.6
        for value in table.finest_orders("l2", 3):
            assert 1.7 <= value <= 2.4

    def test_three_dimensional_h2_ratio(self):
        config = make_config(d=3)
        coarse = run_level(solution_u2(3), build_mesh(config, 4), config).record
        fine = run_level(solution_u2(3), build_mesh(config, 8), config).record
        assert 3.5 <= coarse.h2 / fine.h2 <= 4.5

    def test_lower_bound_two_dimensions(self):
        report = run_lower_bound(make_config(command="verify", Ns=(4, 8, 16, 32), lower_bound=True))
        assert report.passed, report.message

    @pytest.mark.parametrize("seed", [0, 7])
    def test_jittered_two_dimensional_orders(self, seed):
        config = make_config(command="convergence", Ns=(4, 8, 16, 32), jitter=0.25, seed=seed)
        ok, message = check_order_band(run_study(config).table, "h2", 1.8, 2.2, pairs=2)
        assert ok, message

    def test_three_dimensional_orders(self):
        config = make_config(command="convergence", d=3, Ns=(4, 8, 16), solver="cg", tol=1e-10)
        ok, message = check_order_band(run_study(config).table, "h2", 1.7, 2.3, pairs=1)
        assert ok, message

    def test_lower_bound_three_dimensions(self):
        config = make_config(
            command="verify", d=3, Ns=(4, 8, 16), solution="u1", solver="cg", lower_bound=True
        )
        report = run_lower_bound(config)
        assert report.passed, report.message
        assert report.ratio <= 4.0

    def test_consistency_order(self, clamped_w):
        rates = consistency_rates(solution_u2(2), clamped_w, make_config(), Ns=(4, 8, 16))
        values = [value for _, value in rates]
        for coarse, fine in zip(values, values[1:]):
            assert 1.7 <= math.log2(coarse / fine) <= 2.3


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
