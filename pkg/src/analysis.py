"""
誤差解析モジュール

誤差ノルム、整合性誤差 E_h(u, w_h) = a_h(u, w_h) - (f, w_h)、
局所補間の厳密恒等式、離散レベルの誤差恒等式、L2下界の比率検定、
収束次数の算出を提供します。
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.assembly import DiscreteField, ElementQuadrature, SparseSym, element_quadrature
from src.element import AdiniElement, build_element, canonical_interpolant, shape_monomials
from src.fields import FieldFn, bilaplacian_of
from src.mesh import DofMap
from src.polyq import (
    Box,
    RationalPoly,
    monomials_up_to_total_degree,
    random_poly,
    unit_index,
)
from src.quadrature import QuadRule
from utils.logger import setup_logger

logger = setup_logger(__name__)

NORMS = ("l2", "h1", "h2")
INTERPOLATION_NORMS = ("pi_l2", "pi_h1", "pi_h2")
DEFAULT_MAX_RATIO = 4.0


class RateTableError(ValueError):
    """収束表を作れない（記録数不足・メッシュ幅の重複）"""


@dataclass(frozen=True)
class ErrorRecord:
    """
    1メッシュ水準の誤差記録

    Attributes:
        h: メッシュ幅（要素直径の最大値）
        l2: ‖u - u_h‖_{L2}
        h1: |u - u_h|_{H1}
        h2: |u - u_h|_{2,h}
        dofs: 非固定自由度数
        d: 次元
        N: 軸あたりの分割数
        report: 求解記録（SolveReport）
        pi_l2, pi_h1, pi_h2: 補間誤差 u - Π_h u（任意）
    """
    h: float
    l2: float
    h1: float
    h2: float
    dofs: int = 0
    d: int = 0
    N: int = 0
    report: Optional[object] = None
    pi_l2: Optional[float] = None
    pi_h1: Optional[float] = None
    pi_h2: Optional[float] = None

    def __post_init__(self):
        for name in ("h",) + NORMS + INTERPOLATION_NORMS:
            value = getattr(self, name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} は有限の非負値である必要があります: {value}")

    def error(self, norm: str) -> Optional[float]:
        return getattr(self, norm)

    def with_interpolation(self, other: "ErrorRecord") -> "ErrorRecord":
        """other（補間誤差の記録）の値を pi_* 列として付け加える"""
        return replace(self, pi_l2=other.l2, pi_h1=other.h1, pi_h2=other.h2)


@dataclass(frozen=True)
class RateTable:
    """
    収束表

    Attributes:
        records: 粗い順に並んだ記録
        orders: ノルム名 -> 各記録の観測次数（先頭は None）
    """
    records: Tuple[ErrorRecord, ...]
    orders: Dict[str, Tuple[Optional[float], ...]]

    def final_order(self, norm: str) -> Optional[float]:
        return self.orders[norm][-1]

    def finest_orders(self, norm: str, pairs: int) -> List[float]:
        """最も細かい pairs 組の観測次数"""
        values = [v for v in self.orders[norm][1:]]
        return values[-pairs:]


@dataclass(frozen=True)
class LemmaReport:
    """
    厳密検証の結果

    Attributes:
        name: 検証名
        trials: 試行数
        failures: 反例の説明
    """
    name: str
    trials: int
    failures: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass(frozen=True)
class Identity19Report:
    """
    誤差恒等式 (-f, u - u_h) = … の両辺と各項

    Attributes:
        lhs, rhs: 両辺
        residual: |左辺 - 右辺| / scale
        terms: 右辺の各項
        defect: 正規化しない Galerkin 残差 a_h(u_h, Π_h u) - (f, Π_h u)
        scale: 両辺と各項の絶対値の最大値
    """
    lhs: float
    rhs: float
    residual: float
    terms: Dict[str, float] = field(default_factory=dict)
    defect: float = 0.0
    scale: float = 0.0


@dataclass(frozen=True)
class LowerBoundReport:
    """
    L2下界の比率検定

    Attributes:
        Ns: 分割数
        scaled: r_N = ‖u - u_h‖_{L2}・N^2
        ratio: max r_N / min r_N
        max_ratio: 合格閾値
        passed: 合否
        message: 判定理由
    """
    Ns: Tuple[int, ...]
    scaled: Tuple[float, ...]
    ratio: float
    max_ratio: float
    passed: bool
    message: str = ""


@dataclass(frozen=True)
class LeadingTermReport:
    """a_h(u - Π_h u, Π_h u) とその主要項 Σ_K Σ_i Σ_{j≠i} (h_j^2/3)‖∂_i^2∂_j u‖^2"""
    energy: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.energy / self.predicted if self.predicted else float("nan")


# ----------------------------------------------------------------------
# 双一次形式・内積（求積）
# ----------------------------------------------------------------------
def _hessian_pairing(first: np.ndarray, second: np.ndarray, quad: ElementQuadrature) -> float:
    """Σ_K Σ_{i,j} ∫_K first_ij second_ij"""
    return quad.integrate(np.einsum("eqij,eqij->eq", first, second))


def broken_h2_seminorm(v: DiscreteField, rule: QuadRule) -> float:
    """|v|_{2,h} = (Σ_K ‖∇^2 v‖_{0,K}^2)^{1/2}"""
    quad = element_quadrature(v.mesh, rule)
    hess = v.hessians(quad)
    return math.sqrt(max(_hessian_pairing(hess, hess, quad), 0.0))


def energy_pairing(u: FieldFn, v: DiscreteField, rule: QuadRule) -> float:
    """a_h(u, v)"""
    quad = element_quadrature(v.mesh, rule)
    return _hessian_pairing(quad.field_hessian(u), v.hessians(quad), quad)


def load_pairing(f: FieldFn, v: DiscreteField, rule: QuadRule) -> float:
    """(f, v)"""
    quad = element_quadrature(v.mesh, rule)
    return quad.integrate(quad.field_values(f) * v.values(quad))


# ----------------------------------------------------------------------
# 誤差ノルム
# ----------------------------------------------------------------------
def error_norms(
    u: FieldFn,
    uh: DiscreteField,
    rule: QuadRule,
    report: Optional[object] = None,
    N: int = 0
) -> ErrorRecord:
    """
    u - u_h の L2 ノルム・H1 半ノルム・破れ H2 半ノルム

    Args:
        u: 厳密解（2階まで微分可能）
        uh: 離散解
        rule: 誤差計算用の1次元求積則
        report: 求解記録（記録に添付する）
        N: 分割数（記録に添付する）

    Returns:
        ErrorRecord
    """
    mesh = uh.mesh
    quad = element_quadrature(mesh, rule)
    value_err = quad.field_values(u) - uh.values(quad)
    grad_err = quad.field_gradient(u) - uh.gradients(quad)
    hess_err = quad.field_hessian(u) - uh.hessians(quad)

    l2 = quad.integrate(value_err ** 2)
    h1 = quad.integrate(np.sum(grad_err ** 2, axis=-1))
    h2 = quad.integrate(np.sum(hess_err ** 2, axis=(-2, -1)))
    return ErrorRecord(
        h=mesh.mesh_size,
        l2=math.sqrt(max(l2, 0.0)),
        h1=math.sqrt(max(h1, 0.0)),
        h2=math.sqrt(max(h2, 0.0)),
        dofs=uh.dofs.n_free,
        d=mesh.dim,
        N=N or max(mesh.counts),
        report=report
    )


def interpolation_errors(u: FieldFn, dofs: DofMap, rule: QuadRule) -> ErrorRecord:
    """
    u - Π_h u の誤差ノルム（Π_h は頂点の値と勾配による大域補間）

    Args:
        u: 場
        dofs: 自由度番号付け
        rule: 求積則
    """
    interpolant = DiscreteField.interpolate(u, dofs)
    return error_norms(u, interpolant, rule)


def consistency_error(
    u: FieldFn,
    w: DiscreteField,
    rule: QuadRule,
    f: Optional[FieldFn] = None
) -> float:
    """
    E_h(u, w_h) = a_h(u, w_h) - (f, w_h)

    Args:
        u: 厳密解
        w: 離散関数
        rule: 求積則
        f: 右辺（Noneなら Δ^2 u）
    """
    f = bilaplacian_of(u) if f is None else f
    quad = element_quadrature(w.mesh, rule)
    a_term = _hessian_pairing(quad.field_hessian(u), w.hessians(quad), quad)
    f_term = quad.integrate(quad.field_values(f) * w.values(quad))
    return a_term - f_term


def galerkin_residual(
    A: SparseSym,
    x: np.ndarray,
    b: np.ndarray,
    trials: int = 10,
    seed: int = 0
) -> float:
    """
    乱数離散関数 v に対する |a_h(u_h, v) - (f, v)| / (|v|_{2,h} |u_h|_{2,h}) の最大値

    Args:
        A: 剛性行列
        x: 離散解（非固定自由度）
        b: 荷重ベクトル
        trials: 乱数 v の個数
        seed: 乱数シード
    """
    rng = np.random.default_rng(seed)
    residual = b - A.matvec(x)
    norm_x = math.sqrt(max(A.quadratic_form(x), 0.0))
    if norm_x == 0.0:
        return float(np.linalg.norm(residual))
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(A.n)
        norm_v = math.sqrt(A.quadratic_form(v))
        worst = max(worst, abs(float(v @ residual)) / (norm_v * norm_x))
    return worst


# ----------------------------------------------------------------------
# 局所補間の厳密恒等式
# ----------------------------------------------------------------------
def lemma24_sides(u: RationalPoly, v: RationalPoly, element: AdiniElement) -> Tuple[Fraction, Fraction]:
    """
    u ∈ P_4(K), v ∈ P_A(K) に対する
      左辺 (∇^2(u - Π_K u), ∇^2 v)_K
      右辺 -Σ_i Σ_{j≠i} (h_j^2/3) ∫_K ∂_i^2∂_j^2 u ∂_i^2 v
    を有理数で厳密に計算する
    """
    box = element.geometry
    d = box.dim
    error = u - canonical_interpolant(u, element)

    lhs = Fraction(0)
    for i in range(d):
        e_i = error.diff(i)
        v_i = v.diff(i)
        for j in range(d):
            lhs += (e_i.diff(j) * v_i.diff(j)).integrate_box(box)

    rhs = Fraction(0)
    for i in range(d):
        v_ii = v.diff(i, 2)
        if v_ii.is_zero():
            continue
        u_ii = u.diff(i, 2)
        for j in range(d):
            if j == i:
                continue
            h_j = box.half_lengths[j]
            rhs -= h_j * h_j / 3 * (u_ii.diff(j, 2) * v_ii).integrate_box(box)
    return lhs, rhs


def lemma24_check(box: Box, trials: int, seed: int = 0) -> LemmaReport:
    """
    乱数の u ∈ P_4(K), v ∈ P_A(K) で局所補間の恒等式を厳密に検証する

    Args:
        box: 要素形状（有理数）
        trials: 試行数
        seed: 乱数シード

    Returns:
        LemmaReport（不一致があれば反例を含む）
    """
    rng = np.random.default_rng(seed)
    element = build_element(box)
    d = box.dim
    p4 = monomials_up_to_total_degree(d, 4)
    monomials = shape_monomials(d)
    failures = []
    for trial in range(trials):
        u = random_poly(rng, d, p4, center=box.center)
        v = random_poly(rng, d, monomials, center=box.center)
        lhs, rhs = lemma24_sides(u, v, element)
        if lhs != rhs:
            failures.append(f"試行 {trial}: 左辺 {lhs} ≠ 右辺 {rhs}（u={u}, v={v}）")
            logger.error(f"局所補間恒等式の反例: {box}, 試行 {trial}")
        else:
            logger.debug(f"局所補間恒等式 試行 {trial}: {lhs}")
    return LemmaReport(name="lemma24", trials=trials, failures=tuple(failures))


# ----------------------------------------------------------------------
# 誤差恒等式と下界
# ----------------------------------------------------------------------
def identity19_check(
    u: FieldFn,
    uh: DiscreteField,
    rule: QuadRule,
    f: Optional[FieldFn] = None
) -> Identity19Report:
    """
    (-f, u - u_h) = a_h(u, Π_h u - u_h) - (f, Π_h u - u_h) + a_h(u - Π_h u, u - Π_h u)
                    + a_h(u - Π_h u, u_h - Π_h u) + 2(f, Π_h u - u) + 2 a_h(u - Π_h u, Π_h u)
    の両辺を求積で計算する

    Args:
        u: 厳密解（多項式なら求積で厳密）
        uh: 離散解
        rule: 求積則（u2 では6点で厳密）
        f: 右辺（Noneなら Δ^2 u）

    Returns:
        Identity19Report（residual = |左辺 - 右辺| / max(|左辺|, |右辺|, |各項|)）
    """
    f = bilaplacian_of(u) if f is None else f
    quad = element_quadrature(uh.mesh, rule)
    interpolant = DiscreteField.interpolate(u, uh.dofs)

    u_val = quad.field_values(u)
    f_val = quad.field_values(f)
    u_hess = quad.field_hessian(u)
    pi_val = interpolant.values(quad)
    pi_hess = interpolant.hessians(quad)
    uh_val = uh.values(quad)
    uh_hess = uh.hessians(quad)

    e_hess = u_hess - pi_hess
    w_val = pi_val - uh_val
    w_hess = pi_hess - uh_hess

    terms = {
        "a(u,Pi_u-uh)": _hessian_pairing(u_hess, w_hess, quad),
        "-(f,Pi_u-uh)": -quad.integrate(f_val * w_val),
        "a(u-Pi_u,u-Pi_u)": _hessian_pairing(e_hess, e_hess, quad),
        "a(u-Pi_u,uh-Pi_u)": _hessian_pairing(e_hess, -w_hess, quad),
        "2(f,Pi_u-u)": 2 * quad.integrate(f_val * (pi_val - u_val)),
        "2a(u-Pi_u,Pi_u)": 2 * _hessian_pairing(e_hess, pi_hess, quad),
    }
    lhs = -quad.integrate(f_val * (u_val - uh_val))
    rhs = float(sum(terms.values()))
    defect = _hessian_pairing(uh_hess, pi_hess, quad) - quad.integrate(f_val * pi_val)
    scale = max([abs(lhs), abs(rhs)] + [abs(v) for v in terms.values()])
    residual = abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
    logger.info(
        f"誤差恒等式: 左辺 {lhs:.6e}, 右辺 {rhs:.6e}, 相対残差 {residual:.3e}, Galerkin残差 {defect:.3e}"
    )
    return Identity19Report(lhs=lhs, rhs=rhs, residual=residual, terms=terms, defect=defect, scale=scale)


def lower_bound_check(
    records: Sequence[ErrorRecord],
    f_norm: Optional[float] = None,
    max_ratio: float = DEFAULT_MAX_RATIO
) -> LowerBoundReport:
    """
    r_N = ‖u - u_h‖_{L2}・N^2 が0に潰れず発散もしないか（max/min ≤ max_ratio）

    Args:
        records: 各水準の誤差記録（N を含む）
        f_norm: ‖f‖_{L2}（0なら前提不成立で不合格）
        max_ratio: 比の閾値

    Returns:
        LowerBoundReport
    """
    if len(records) < 2:
        raise RateTableError(f"下界検定には2水準以上が必要です: {len(records)}")
    Ns = tuple(int(r.N) for r in records)
    scaled = tuple(r.l2 * n * n for r, n in zip(records, Ns))

    if f_norm is not None and f_norm == 0.0:
        return LowerBoundReport(Ns, scaled, float("nan"), max_ratio, False, "‖f‖ = 0 のため前提が成り立ちません")
    smallest = min(scaled)
    if smallest <= 0.0:
        return LowerBoundReport(Ns, scaled, float("inf"), max_ratio, False, "r_N が0になりました")

    ratio = max(scaled) / smallest
    passed = ratio <= max_ratio
    message = f"max/min = {ratio:.4g} {'≤' if passed else '>'} {max_ratio:g}"
    level = logger.info if passed else logger.error
    level(f"L2下界検定: {'PASS' if passed else 'FAIL'}（{message}）")
    return LowerBoundReport(Ns, scaled, ratio, max_ratio, passed, message)


def leading_term_check(u: FieldFn, dofs: DofMap, rule: QuadRule) -> LeadingTermReport:
    """
    a_h(u - Π_h u, Π_h u) と主要項 Σ_K Σ_i Σ_{j≠i} (h_j^2/3)‖∂_i^2∂_j u‖_{0,K}^2 の比較

    一様メッシュの細分で比は1に近づく。
    """
    quad = element_quadrature(dofs.mesh, rule)
    interpolant = DiscreteField.interpolate(u, dofs)
    pi_hess = interpolant.hessians(quad)
    energy = _hessian_pairing(quad.field_hessian(u) - pi_hess, pi_hess, quad)

    d = u.dim
    halves = quad.half_lengths
    predicted = 0.0
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            alpha = tuple(np.add(unit_index(d, i, 2), unit_index(d, j)))
            third = quad.field_values(u, alpha)
            per_element = quad.per_element(third ** 2)
            predicted += float(np.sum(halves[:, j] ** 2 / 3.0 * per_element))
    report = LeadingTermReport(energy=energy, predicted=predicted)
    logger.info(f"主要項: a_h = {energy:.6e}, 予測 = {predicted:.6e}, 比 = {report.ratio:.4f}")
    return report


# ----------------------------------------------------------------------
# 収束次数
# ----------------------------------------------------------------------
def observed_order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> Optional[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1})（誤差が0なら None）"""
    if e_coarse <= 0 or e_fine <= 0:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def nominal_size(record: ErrorRecord, use_divisions: bool) -> float:
    """次数計算に使うメッシュ幅（分割数があれば 1/N、なければ最大要素直径 h）"""
    return 1.0 / record.N if use_divisions else record.h


def rate_table(records: Sequence[ErrorRecord]) -> RateTable:
    """
    誤差記録から観測次数の表を作る

    全記録が分割数 N を持つ場合は公称幅 1/N、それ以外は h で次数を計算する。

    Args:
        records: 2つ以上の記録（メッシュ幅が互いに異なる）

    Returns:
        RateTable（粗い順）

    Raises:
        RateTableError: 記録数不足またはメッシュ幅の重複
    """
    if len(records) < 2:
        raise RateTableError(f"収束表には2水準以上が必要です: {len(records)}")
    use_divisions = all(r.N > 0 for r in records)
    ordered = tuple(sorted(records, key=lambda r: -nominal_size(r, use_divisions)))
    sizes = [nominal_size(r, use_divisions) for r in ordered]
    for coarse, fine in zip(sizes, sizes[1:]):
        if not fine < coarse:
            raise RateTableError(f"メッシュ幅が重複しています: {fine}")

    norms = list(NORMS)
    if all(r.pi_l2 is not None for r in ordered):
        norms += list(INTERPOLATION_NORMS)

    orders: Dict[str, Tuple[Optional[float], ...]] = {}
    for norm in norms:
        values: List[Optional[float]] = [None]
        for k in range(1, len(ordered)):
            values.append(observed_order(
                ordered[k - 1].error(norm), ordered[k].error(norm), sizes[k - 1], sizes[k]
            ))
        orders[norm] = tuple(values)
    return RateTable(records=ordered, orders=orders)


def check_order_band(table: RateTable, norm: str, low: float, high: float, pairs: int = 2) -> Tuple[bool, str]:
    """
    最も細かい pairs 組の観測次数が [low, high] に入るか

    Returns:
        (合否, メッセージ)
    """
    if norm not in table.orders:
        return False, f"未知のノルムです: {norm}"
    values = table.finest_orders(norm, pairs)
    bad = [v for v in values if v is None or not low <= v <= high]
    shown = ", ".join("-" if v is None else f"{v:.4f}" for v in values)
    if bad:
        return False, f"{norm} の次数 [{shown}] が [{low}, {high}] の範囲外です"
    return True, f"{norm} の次数 [{shown}] は [{low}, {high}] の範囲内です"
