"""
コマンドラインインターフェースモジュール

サブコマンド:
  solve        1水準を解いてCSV1行を出力
  convergence  複数水準の収束表をCSVで出力（--assert-orders で次数を検査）
  verify       構造補題の厳密検証、誤差恒等式、主要項、L2下界
  mesh         メッシュをテキスト形式で書き出す

終了コード: 0 成功 / 2 設定エラー / 3 検証・次数検査の失敗 / 4 ソルバーの失敗
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, TextIO

from src.analysis import check_order_band
from src.config_loader import ConfigError, RunConfig, build_run_config, load_settings
from src.element import NonUnisolventError
from src.lemma_checker import run_lemma_suite
from src.linsolve import SolverError
from src.mesh import write_mesh_file
from src.output_formatter import OutputFormatter
from src.study_runner import (
    build_mesh,
    resolve_solution,
    run_identity19,
    run_leading_term,
    run_level,
    run_lower_bound,
    run_study,
)
from utils.logger import configure_logging, setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_SOLVER = 4

IDENTITY19_THRESHOLD = 1e-8


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d", type=int, default=None, help="次元 (1-3)")
    common.add_argument("--u", default=None, help="厳密解 (u1 | u2)")
    common.add_argument("--solution-file", dest="solution_file", default=None,
                        help="多項式解ファイル（1行 `coeff a1 … ad`）")
    common.add_argument("--mesh-file", dest="mesh_file", default=None, help="メッシュファイル")
    common.add_argument("--quad-assembly", dest="quad_assembly", type=int, default=None,
                        help="組立用Gauss点数（1軸あたり）")
    common.add_argument("--quad-error", dest="quad_error", type=int, default=None,
                        help="誤差計算用Gauss点数（1軸あたり）")
    common.add_argument("--solver", choices=["cg", "dense"], default=None, help="線形ソルバー")
    common.add_argument("--tol", type=float, default=None, help="CGの相対残差許容値")
    common.add_argument("--maxit", type=int, default=None, help="CGの最大反復回数")
    common.add_argument("--out", default=None, help="出力ファイル（省略時は標準出力）")
    common.add_argument("--no-timing", dest="no_timing", action="store_true", default=None,
                        help="seconds 列を0にする")
    common.add_argument("--threads", type=int, default=None, help="ワーカー数（既定: ADINI_THREADS）")
    common.add_argument("--log-level", dest="log_level", default=None, help="ログレベル")
    common.add_argument("--log-file", dest="log_file", default=None, help="ログファイル")
    common.add_argument("--config", default=None, help="設定ファイル（既定: config/settings.yaml）")
    return common


def _mesh_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jitter", type=float, default=None, help="非合同メッシュの揺らぎ率 [0, 0.45]")
    parser.add_argument("--seed", type=int, default=None, help="非合同メッシュの乱数シード")


def build_parser() -> argparse.ArgumentParser:
    """引数パーサーを作る"""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="adini-fem",
        description="Adini要素による重調和方程式の求解と収束検証"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="1水準を解く")
    solve.add_argument("--N", type=int, default=None, help="軸あたりの分割数")
    solve.add_argument("--dump-matrix", dest="dump_matrix", default=None, help="剛性行列の書き出し先")
    _mesh_options(solve)

    convergence = sub.add_parser("convergence", parents=[common], help="収束表を作る")
    convergence.add_argument("--Ns", default=None, help="分割数のカンマ区切り（例: 4,8,16）")
    convergence.add_argument("--interpolant", action="store_true", default=None,
                             help="補間誤差列 pi_*_err を追加する")
    convergence.add_argument("--assert-orders", dest="assert_orders", action="append", default=None,
                             help="次数範囲の検査（例: h2:1.8:2.2、複数指定可）")
    _mesh_options(convergence)

    verify = sub.add_parser("verify", parents=[common], help="構造補題・恒等式の検証")
    verify.add_argument("--trials", type=int, default=None, help="直方体あたりの乱数試行数")
    verify.add_argument("--boxes", type=int, default=None, help="乱数直方体の個数")
    verify.add_argument("--seed", dest="verify_seed", type=int, default=None, help="検証の乱数シード")
    verify.add_argument("--jitter", type=float, default=None, help="非合同メッシュの揺らぎ率")
    verify.add_argument("--identity19", action="store_true", default=None, help="誤差恒等式の残差")
    verify.add_argument("--leading-term", dest="leading_term", action="store_true", default=None,
                        help="補間誤差エネルギーの主要項")
    verify.add_argument("--lower-bound", dest="lower_bound", action="store_true", default=None,
                        help="L2下界の比率検定")
    verify.add_argument("--max-ratio", dest="max_ratio", type=float, default=None, help="下界検定の閾値")
    verify.add_argument("--N", type=int, default=None, help="分割数（--identity19 / --leading-term）")
    verify.add_argument("--Ns", default=None, help="分割数のカンマ区切り（--lower-bound）")

    mesh = sub.add_parser("mesh", parents=[common], help="メッシュを書き出す")
    mesh.add_argument("--N", type=int, default=None, help="軸あたりの分割数")
    _mesh_options(mesh)
    return parser


def _emit(config: RunConfig, text: str, stdout: TextIO) -> None:
    if config.out:
        target = Path(config.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        logger.info(f"出力しました: {target}")
    else:
        stdout.write(text)


def cmd_solve(config: RunConfig, stdout: TextIO) -> int:
    mesh = build_mesh(config, config.N)
    u = resolve_solution(config, d=mesh.dim)
    level = run_level(u, mesh, config, N=config.N if not config.mesh_file else None)
    formatter = OutputFormatter(no_timing=config.no_timing)
    _emit(config, formatter.to_csv_text(formatter.records_to_dataframe([level.record])), stdout)
    return EXIT_OK


def cmd_convergence(config: RunConfig, stdout: TextIO) -> int:
    study = run_study(config)
    formatter = OutputFormatter(no_timing=config.no_timing)
    _emit(config, formatter.to_csv_text(formatter.rate_table_to_dataframe(study.table)), stdout)
    logger.info("収束表:\n" + formatter.format_rate_table(study.table))

    exit_code = EXIT_OK
    for band in config.assert_orders:
        ok, message = check_order_band(study.table, band.norm, band.low, band.high, pairs=2)
        if ok:
            logger.info(f"次数検査 OK: {message}")
        else:
            logger.error(f"次数検査 NG: {message}")
            exit_code = EXIT_ASSERTION
    return exit_code


def cmd_verify(config: RunConfig, stdout: TextIO) -> int:
    formatter = OutputFormatter(no_timing=config.no_timing)
    selected = config.identity19 or config.leading_term or config.lower_bound
    sections: List[str] = []
    failed = False

    if not selected:
        reports = run_lemma_suite(
            config.d,
            trials=config.trials,
            boxes=config.boxes,
            seed=config.verify_seed,
            workers=config.threads
        )
        sections.append(formatter.format_lemma_reports(reports))
        failed |= not all(r.passed for r in reports)

    if config.identity19:
        report = run_identity19(config)
        sections.append(formatter.format_identity19(report, IDENTITY19_THRESHOLD))
        failed |= not report.residual <= IDENTITY19_THRESHOLD

    if config.leading_term:
        report = run_leading_term(config)
        sections.append(formatter.format_leading_term(report))
        failed |= not (report.energy > 0 and report.predicted > 0)

    if config.lower_bound:
        report = run_lower_bound(config)
        sections.append(formatter.format_lower_bound(report))
        failed |= not report.passed

    _emit(config, "\n\n".join(sections) + "\n", stdout)
    return EXIT_ASSERTION if failed else EXIT_OK


def cmd_mesh(config: RunConfig, stdout: TextIO) -> int:
    mesh = build_mesh(config, config.N)
    write_mesh_file(mesh, config.out)
    return EXIT_OK


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig, TextIO], int]] = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
    "mesh": cmd_mesh,
}


def main(
    argv: Optional[List[str]] = None,
    stdout: Optional[TextIO] = None,
    environ: Optional[Mapping[str, str]] = None
) -> int:
    """
    CLIの入口

    Args:
        argv: 引数（Noneなら sys.argv[1:]）
        stdout: CSV・レポートの出力先（Noneなら sys.stdout）
        environ: 環境変数（Noneなら os.environ）

    Returns:
        終了コード
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    stdout = sys.stdout if stdout is None else stdout
    try:
        settings = load_settings(args.config)
        config = build_run_config(args, settings, environ)
        configure_logging(config.log_level, config.log_file)
    except ConfigError as exc:
        print(f"設定エラー: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMAND_HANDLERS[config.command](config, stdout)
    except SolverError as exc:
        logger.error(f"ソルバーエラー: {exc}")
        return EXIT_SOLVER
    except NonUnisolventError as exc:
        logger.error(f"要素の構築に失敗しました: {exc}")
        return EXIT_ASSERTION
    except (ValueError, FileNotFoundError) as exc:
        logger.error(f"入力エラー: {exc}")
        return EXIT_CONFIG
