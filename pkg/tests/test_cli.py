"""
コマンドラインインターフェースのテスト
"""

import io

import pandas as pd
import pytest

from src.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, build_parser, main
from src.output_formatter import CSV_COLUMNS
from utils.logger import configure_logging


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    configure_logging("INFO", None)


def run(*argv):
    """main を呼び、(終了コード, 標準出力) を返す"""
    stdout = io.StringIO()
    code = main(list(argv) + ["--log-level", "WARNING"], stdout=stdout, environ={})
    return code, stdout.getvalue()


class TestParser:
    """引数の解釈"""

    def test_subcommand_required(self):
        assert main([], stdout=io.StringIO(), environ={}) == EXIT_CONFIG

    def test_help(self):
        assert main(["solve", "--help"], stdout=io.StringIO(), environ={}) == EXIT_OK

    def test_unknown_option(self):
        assert main(["solve", "--colour"], stdout=io.StringIO(), environ={}) == EXIT_CONFIG

    def test_defaults_are_unset(self):
        args = build_parser().parse_args(["convergence", "--Ns", "4,8"])
        assert args.Ns == "4,8"
        assert args.d is None
        assert args.solver is None


class TestSolve:
    """solve"""

    def test_csv_row(self):
        code, out = run("solve", "--d", "2", "--N", "4", "--solver", "dense", "--no-timing")
        assert code == EXIT_OK
        df = pd.read_csv(io.StringIO(out))
        assert list(df.columns) == CSV_COLUMNS
        assert df.loc[0, "dofs"] == 27
        assert df.loc[0, "seconds"] == 0.0

    def test_out_file(self, tmp_path):
        path = tmp_path / "row.csv"
        code, out = run("solve", "--d", "1", "--N", "3", "--out", str(path))
        assert code == EXIT_OK
        assert out == ""
        assert path.read_text(encoding="utf-8").startswith("d,N,h,dofs")

    def test_unknown_solution(self):
        assert run("solve", "--u", "u7")[0] == EXIT_CONFIG

    def test_no_free_dofs(self):
        assert run("solve", "--N", "1")[0] == EXIT_CONFIG

    def test_solver_failure(self):
        code, _ = run("solve", "--N", "6", "--solver", "cg", "--maxit", "1", "--tol", "1e-14")
        assert code == EXIT_SOLVER

    def test_mesh_file(self, tmp_path):
        mesh_path = tmp_path / "mesh.txt"
        assert run("mesh", "--d", "1", "--N", "2", "--out", str(mesh_path))[0] == EXIT_OK
        code, out = run("solve", "--mesh-file", str(mesh_path), "--solver", "dense")
        assert code == EXIT_OK
        df = pd.read_csv(io.StringIO(out))
        assert df.loc[0, "d"] == 1
        assert df.loc[0, "dofs"] == 2


class TestConvergence:
    """convergence"""

    def test_rate_table(self):
        code, out = run("convergence", "--Ns", "4,8", "--solver", "dense", "--no-timing",
                        "--assert-orders", "h2:1.5:2.5")
        assert code == EXIT_OK
        df = pd.read_csv(io.StringIO(out))
        assert df["N"].tolist() == [4, 8]
        assert pd.isna(df.loc[0, "h2_order"])
        assert 1.8 <= df.loc[1, "h2_order"] <= 2.2

    def test_impossible_band(self):
        code, _ = run("convergence", "--Ns", "4,8", "--solver", "dense", "--assert-orders", "h2:5:6")
        assert code == EXIT_ASSERTION

    def test_interpolant_columns(self):
        code, out = run("convergence", "--d", "1", "--Ns", "2,4", "--interpolant")
        assert code == EXIT_OK
        assert out.splitlines()[0].endswith("pi_l2_err,pi_h1_err,pi_h2_err")

    def test_single_level_rejected(self):
        assert run("convergence", "--Ns", "4")[0] == EXIT_CONFIG


class TestVerify:
    """verify"""

    def test_lemma_suite(self):
        code, out = run("verify", "--d", "1", "--trials", "2", "--boxes", "1")
        assert code == EXIT_OK
        assert "PASS" in out
        assert "FAIL" not in out

    def test_identity19(self):
        code, out = run("verify", "--identity19", "--N", "4", "--solver", "dense")
        assert code == EXIT_OK
        assert "PASS" in out

    def test_lower_bound_needs_levels(self):
        assert run("verify", "--lower-bound", "--Ns", "8")[0] == EXIT_CONFIG


class TestMesh:
    """mesh"""

    def test_writes_file(self, tmp_path):
        path = tmp_path / "m.txt"
        assert run("mesh", "--d", "1", "--N", "2", "--out", str(path))[0] == EXIT_OK
        assert path.read_text(encoding="utf-8") == "dim 1\n0 1/2 1\n"

    def test_requires_out(self):
        assert run("mesh", "--N", "2")[0] == EXIT_CONFIG


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
