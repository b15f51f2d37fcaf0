"""
収束検証の実行モジュール

メッシュ生成 → 組立 → 求解 → 誤差解析 を1水準ごとに行い、
複数水準の結果から収束表を作ります。
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.analysis import (
    ErrorRecord,
    Identity19Report,
    LeadingTermReport,
    LowerBoundReport,
    RateTable,
    broken_h2_seminorm,
    consistency_error,
    error_norms,
    identity19_check,
    interpolation_errors,
    leading_term_check,
    lower_bound_check,
    rate_table,
)
from src.assembly import DiscreteField, SparseSym, assemble, element_quadrature, load_vector
from src.config_loader import RunConfig
from src.fields import FieldFn, bilaplacian_of, load_polynomial_solution, manufactured_solution
from src.linsolve import SolveReport, default_maxit, solve
from src.mesh import BoxMesh, DofMap, build_dof_map, graded_mesh, read_mesh_file, unit_domain, uniform_mesh
from src.quadrature import gauss_rule
from utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class LevelResult:
    """
    1水準の結果

    Attributes:
        mesh: メッシュ
        dofs: 自由度番号付け
        matrix: 剛性行列
        rhs: 荷重ベクトル
        solution: 離散解
        report: 求解記録
        record: 誤差記録
    """
    mesh: BoxMesh
    dofs: DofMap
    matrix: SparseSym
    rhs: np.ndarray
    solution: DiscreteField
    report: SolveReport
    record: ErrorRecord


@dataclass(frozen=True)
class StudyResult:
    levels: Tuple[LevelResult, ...]
    table: RateTable

    @property
    def records(self) -> Tuple[ErrorRecord, ...]:
        return self.table.records


def resolve_solution(config: RunConfig, d: Optional[int] = None) -> FieldFn:
    """設定から厳密解を作る（--solution-file を優先）"""
    d = config.d if d is None else d
    if config.solution_file:
        return load_polynomial_solution(config.solution_file, d)
    return manufactured_solution(config.solution, d)


def build_mesh(config: RunConfig, N: int) -> BoxMesh:
    """
    設定に従って1水準のメッシュを作る

    --mesh-file があればそれを読み、jitter > 0 なら非合同メッシュ、それ以外は一様メッシュ。
    """
    if config.mesh_file:
        return read_mesh_file(config.mesh_file)
    domain = unit_domain(config.d)
    counts = (N,) * config.d
    if config.jitter > 0:
        return graded_mesh(domain, counts, seed=config.seed, jitter=config.jitter)
    return uniform_mesh(domain, counts)


def run_level(u: FieldFn, mesh: BoxMesh, config: RunConfig, N: Optional[int] = None) -> LevelResult:
    """
    1水準の求解と誤差計算

    Args:
        u: 厳密解
        mesh: メッシュ
        config: 実行設定
        N: 記録する分割数（Noneならメッシュの最大分割数）

    Returns:
        LevelResult

    Raises:
        NoFreeDofsError: 非固定自由度がない場合
        SolverError: 求解に失敗した場合
    """
    N = max(mesh.counts) if N is None else N
    assembly_rule = gauss_rule(config.quad_assembly)
    error_rule = gauss_rule(config.quad_error)

    logger.info(f"水準 N={N}: 要素 {mesh.n_elements}, h={mesh.mesh_size:.6g}")
    dofs = build_dof_map(mesh)
    matrix = assemble(mesh, dofs, assembly_rule)
    rhs = load_vector(bilaplacian_of(u), mesh, dofs, assembly_rule)

    maxit = config.maxit if config.maxit is not None else default_maxit(dofs.n_free, config.maxit_factor)
    x, report = solve(matrix, rhs, method=config.solver, tol=config.tol, maxit=maxit)
    if config.no_timing:
        report = SolveReport(report.iterations, report.residual, 0.0, report.method)

    solution = DiscreteField.from_free(dofs, x)
    record = error_norms(u, solution, error_rule, report=report, N=N)
    if config.interpolant:
        record = record.with_interpolation(interpolation_errors(u, dofs, error_rule))
    if config.dump_matrix:
        matrix.dump(config.dump_matrix)

    logger.info(
        f"水準 N={N}: 自由度 {dofs.n_free}, L2 {record.l2:.6e}, H1 {record.h1:.6e}, H2 {record.h2:.6e}"
    )
    return LevelResult(mesh, dofs, matrix, rhs, solution, report, record)


def run_study(config: RunConfig, u: Optional[FieldFn] = None) -> StudyResult:
    """
    config.Ns の各水準を解いて収束表を作る

    Raises:
        RateTableError: 水準が2未満の場合
    """
    u = resolve_solution(config) if u is None else u
    levels = []
    for N in config.Ns:
        levels.append(run_level(u, build_mesh(config, N), config, N=N))
    table = rate_table([level.record for level in levels])
    return StudyResult(levels=tuple(levels), table=table)


def run_identity19(config: RunConfig, u: Optional[FieldFn] = None) -> Identity19Report:
    """config.N の1水準を解き、誤差恒等式の残差を計算する"""
    u = resolve_solution(config) if u is None else u
    level = run_level(u, build_mesh(config, config.N), config, N=config.N)
    return identity19_check(u, level.solution, gauss_rule(config.quad_error))


def run_leading_term(config: RunConfig, u: Optional[FieldFn] = None) -> LeadingTermReport:
    u = resolve_solution(config) if u is None else u
    dofs = build_dof_map(build_mesh(config, config.N))
    return leading_term_check(u, dofs, gauss_rule(config.quad_error))


def source_norm(u: FieldFn, mesh: BoxMesh, n: int) -> float:
    """‖Δ^2 u‖_{L2}（求積）"""
    quad = element_quadrature(mesh, gauss_rule(n))
    values = quad.field_values(bilaplacian_of(u))
    return math.sqrt(max(quad.integrate(values ** 2), 0.0))


def run_lower_bound(config: RunConfig, u: Optional[FieldFn] = None) -> LowerBoundReport:
    """config.Ns の各水準を解いて L2 下界の比率検定を行う"""
    u = resolve_solution(config) if u is None else u
    records = []
    mesh = None
    for N in config.Ns:
        mesh = build_mesh(config, N)
        records.append(run_level(u, mesh, config, N=N).record)
    f_norm = source_norm(u, mesh, config.quad_error)
    return lower_bound_check(records, f_norm=f_norm, max_ratio=config.max_ratio)


def consistency_rates(
    u: FieldFn,
    w: FieldFn,
    config: RunConfig,
    Ns: Sequence[int]
) -> List[Tuple[int, float]]:
    """
    固定した滑らかな w の補間 w_h = Π_h w に対する |E_h(u, w_h)| / |w_h|_{2,h}

    Returns:
        [(N, 比)]
    """
    rule = gauss_rule(config.quad_error)
    results = []
    for N in Ns:
        dofs = build_dof_map(build_mesh(config, N))
        w_h = DiscreteField.interpolate(w, dofs)
        ratio = abs(consistency_error(u, w_h, rule)) / broken_h2_seminorm(w_h, rule)
        logger.info(f"整合性誤差 N={N}: |E_h|/|w_h|_(2,h) = {ratio:.6e}")
        results.append((N, ratio))
    return results
