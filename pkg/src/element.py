"""
Adini要素モジュール

d次元直方体上のAdini要素 (K, P_A(K), D) を扱います。
- 形状関数空間 P_A(K) = Q_1(K) + span{x_i^2 q : q ∈ Q_1(K)}
- 節点パラメータ D(v) = (v(a), ∇v(a))（頂点ごと）
- 局所作用素 Π_K, Π^1_K, Π_{0,K}, R^1_K と面展開係数 B^K_i(j, α)

基底は一般化Vandermonde系を有理数で厳密に解いて構築し、
組立用にはその浮動小数点版（参照要素上の値表）を用います。
"""

import itertools
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from src.polyq import (
    Box,
    HIGH,
    LOW,
    MultiIndex,
    RationalPoly,
    linear_combination,
    to_fraction,
    unit_index,
)
from src.quadrature import QuadRule, tensor_rule
from utils.logger import setup_logger

logger = setup_logger(__name__)

VALUE_DOF = -1


class NonUnisolventError(RuntimeError):
    """Vandermonde行列が特異（節点パラメータが単一解性を持たない）"""


class MultiIndexError(ValueError):
    """多重指数が許容集合に含まれない"""


# ----------------------------------------------------------------------
# 形状関数空間と自由度の並び
# ----------------------------------------------------------------------
def shape_monomials(d: int) -> List[MultiIndex]:
    """
    P_A の標準単項式基底

    Q_1 の単項式（全成分 ≤ 1）に続けて、各軸 i について α_i ∈ {2,3}、
    他成分 ≤ 1 の単項式を並べる。個数は (d+1)・2^d。

    Args:
        d: 次元（1以上）

    Returns:
        多重指数のリスト
    """
    if d < 1:
        raise ValueError(f"次元は1以上である必要があります: {d}")
    monomials = list(itertools.product((0, 1), repeat=d))
    for i in range(d):
        for rest in itertools.product((0, 1), repeat=d - 1):
            for power in (2, 3):
                monomials.append(rest[:i] + (power,) + rest[i:])
    return monomials


def local_dof_layout(d: int) -> List[Tuple[int, int]]:
    """
    局所自由度の並び [(頂点番号, 軸)]

    頂点は (ξ_1,…,ξ_d) ∈ {-1,+1}^d の辞書式順、頂点内は
    (値, ∂/∂x_1, …, ∂/∂x_d)。値の自由度の軸は VALUE_DOF。
    """
    return [
        (vertex, axis)
        for vertex in range(2 ** d)
        for axis in [VALUE_DOF] + list(range(d))
    ]


def m_indices(d: int, i: int, j: int) -> List[MultiIndex]:
    """
    M_{i,j} = {α : α_i = 1, 2 ≤ α_j ≤ 3, 他の α_k ≤ 1}
    """
    if i == j:
        raise MultiIndexError(f"M_(i,j) は i ≠ j が必要です: i={i}, j={j}")
    others = [k for k in range(d) if k not in (i, j)]
    result = []
    for power in (2, 3):
        for rest in itertools.product((0, 1), repeat=len(others)):
            alpha = [0] * d
            alpha[i] = 1
            alpha[j] = power
            for k, e in zip(others, rest):
                alpha[k] = e
            result.append(tuple(alpha))
    return result


# ----------------------------------------------------------------------
# 節点値
# ----------------------------------------------------------------------
class VertexRecord(NamedTuple):
    """1頂点の節点値（値と勾配）"""
    value: Fraction
    gradient: Tuple[Fraction, ...]


@dataclass(frozen=True)
class NodalValues:
    """
    全頂点の節点値 D(v)

    Attributes:
        records: 辞書式頂点順の VertexRecord（長さ 2^d）
    """
    records: Tuple[VertexRecord, ...]

    def __post_init__(self):
        n = len(self.records)
        if n == 0 or n & (n - 1):
            raise ValueError(f"頂点数は2のべき乗である必要があります: {n}")
        d = n.bit_length() - 1
        for record in self.records:
            if len(record.gradient) != d:
                raise ValueError(
                    f"勾配の成分数 {len(record.gradient)} が次元 {d} と一致しません"
                )

    @property
    def dim(self) -> int:
        return len(self.records).bit_length() - 1

    @classmethod
    def from_flat(cls, d: int, flat: Sequence) -> "NodalValues":
        """局所自由度順の平坦な列から生成する"""
        if len(flat) != (d + 1) * 2 ** d:
            raise ValueError(
                f"節点値の個数 {len(flat)} が (d+1)・2^d = {(d + 1) * 2 ** d} と一致しません"
            )
        records = []
        for v in range(2 ** d):
            chunk = flat[v * (d + 1):(v + 1) * (d + 1)]
            records.append(VertexRecord(to_fraction(chunk[0]), tuple(to_fraction(g) for g in chunk[1:])))
        return cls(tuple(records))

    def flat(self) -> List[Fraction]:
        values: List[Fraction] = []
        for record in self.records:
            values.append(record.value)
            values.extend(record.gradient)
        return values


def nodal_functionals(p: RationalPoly, box: Box) -> NodalValues:
    """
    多項式 p の節点パラメータ D(p)

    Args:
        p: 多項式
        box: 要素形状

    Returns:
        NodalValues
    """
    gradient = [p.diff(k) for k in range(box.dim)]
    records = []
    for vertex in box.vertices():
        records.append(VertexRecord(
            p.eval(vertex),
            tuple(g.eval(vertex) for g in gradient)
        ))
    return NodalValues(tuple(records))


# ----------------------------------------------------------------------
# 要素の構築
# ----------------------------------------------------------------------
def _shifted_monomial(d: int, alpha: MultiIndex) -> RationalPoly:
    return RationalPoly.monomial(d, alpha)


def vandermonde_matrix(box: Box) -> List[List[Fraction]]:
    """
    一般化Vandermonde行列（行 = 節点パラメータ、列 = 中心をずらした単項式 (x - x_c)^α）

    行列は中心によらず半幅のみで決まる。
    """
    d = box.dim
    local = Box((Fraction(0),) * d, box.half_lengths)
    columns = [nodal_functionals(_shifted_monomial(d, alpha), local).flat()
               for alpha in shape_monomials(d)]
    n = len(columns)
    return [[columns[c][r] for c in range(n)] for r in range(n)]


def _to_domain_matrix(rows: List[List[Fraction]]) -> DomainMatrix:
    n = len(rows)
    return DomainMatrix(
        [[QQ(v.numerator, v.denominator) for v in row] for row in rows],
        (n, n),
        QQ
    )


def _from_domain_element(value) -> Fraction:
    rational = QQ.to_sympy(value)
    return Fraction(int(rational.p), int(rational.q))


def vandermonde_determinant(box: Box) -> Fraction:
    """Vandermonde行列式（厳密値）"""
    return _from_domain_element(_to_domain_matrix(vandermonde_matrix(box)).det())


_SHAPE_LOCK = threading.Lock()
_SHAPE_CACHE: Dict[Tuple[Fraction, ...], Tuple[Tuple[RationalPoly, ...], Fraction]] = {}
_SHAPE_KEY_LOCKS: Dict[Tuple[Fraction, ...], threading.Lock] = {}


def _solve_local_basis(half_lengths: Tuple[Fraction, ...]) -> Tuple[Tuple[RationalPoly, ...], Fraction]:
    d = len(half_lengths)
    local = Box((Fraction(0),) * d, half_lengths)
    rows = vandermonde_matrix(local)
    matrix = _to_domain_matrix(rows)
    det = _from_domain_element(matrix.det())
    if det == 0:
        message = f"Vandermonde行列が特異です（半幅 {half_lengths}）: 単一解性が成り立ちません"
        logger.error(message)
        raise NonUnisolventError(message)

    inverse = matrix.inv().to_Matrix().tolist()
    monomials = shape_monomials(d)
    basis = []
    for i in range(len(monomials)):
        basis.append(linear_combination(d, (
            (Fraction(int(inverse[c][i].p), int(inverse[c][i].q)), _shifted_monomial(d, alpha))
            for c, alpha in enumerate(monomials)
        )))
    return tuple(basis), det


def _cached_local_basis(half_lengths: Tuple[Fraction, ...]) -> Tuple[Tuple[RationalPoly, ...], Fraction]:
    """半幅ごとに一度だけ基底を解く（同一キーの同時構築は待ち合わせる）"""
    with _SHAPE_LOCK:
        cached = _SHAPE_CACHE.get(half_lengths)
        if cached is not None:
            return cached
        key_lock = _SHAPE_KEY_LOCKS.setdefault(half_lengths, threading.Lock())

    with key_lock:
        with _SHAPE_LOCK:
            cached = _SHAPE_CACHE.get(half_lengths)
        if cached is not None:
            return cached
        logger.debug(f"基底を構築します: 半幅 {tuple(str(h) for h in half_lengths)}")
        result = _solve_local_basis(half_lengths)
        with _SHAPE_LOCK:
            _SHAPE_CACHE[half_lengths] = result
        return result


def clear_shape_cache() -> None:
    with _SHAPE_LOCK:
        _SHAPE_CACHE.clear()
        _SHAPE_KEY_LOCKS.clear()


@dataclass(frozen=True)
class AdiniElement:
    """
    Adini要素

    Attributes:
        geometry: 要素形状 K
        monomials: P_A を張る単項式 (x - x_c)^α の多重指数
        local_basis: 双対基底（変数 y = x - x_c の多項式）
        basis: 双対基底（変数 x の多項式）
        vandermonde_det: Vandermonde行列式
    """
    geometry: Box
    monomials: Tuple[MultiIndex, ...]
    local_basis: Tuple[RationalPoly, ...]
    basis: Tuple[RationalPoly, ...] = field(repr=False)
    vandermonde_det: Fraction = Fraction(0)

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def n_dofs(self) -> int:
        return len(self.basis)

    def nodal_matrix(self) -> List[List[Fraction]]:
        """[i][j] = 節点パラメータ j を基底 i に適用した値（恒等行列になる）"""
        return [nodal_functionals(b, self.geometry).flat() for b in self.basis]

    def contains(self, p: RationalPoly) -> bool:
        """p ∈ P_A(K) か（中心をずらした変数での台が単項式集合に含まれるか）"""
        allowed = set(self.monomials)
        shifted = p.translate(self.geometry.center)
        return all(alpha in allowed for alpha in shifted.support())

    @cached_property
    def float_twin(self) -> "FloatBasis":
        """local_basis の浮動小数点版（変数 y = x - x_c）"""
        return FloatBasis.from_polys(self.local_basis)


def build_element(box: Box) -> AdiniElement:
    """
    直方体 K 上のAdini要素を構築する

    Vandermonde系を有理数で厳密に解き、節点双対基底を得る。
    同じ半幅の要素では解を再利用する。

    Args:
        box: 要素形状

    Returns:
        AdiniElement

    Raises:
        NonUnisolventError: Vandermonde行列が特異な場合
    """
    local_basis, det = _cached_local_basis(box.half_lengths)
    negative_center = tuple(-c for c in box.center)
    basis = tuple(b.translate(negative_center) for b in local_basis)
    return AdiniElement(
        geometry=box,
        monomials=tuple(shape_monomials(box.dim)),
        local_basis=local_basis,
        basis=basis,
        vandermonde_det=det
    )


# ----------------------------------------------------------------------
# 局所作用素
# ----------------------------------------------------------------------
def interp_nodal(values: NodalValues, element: AdiniElement) -> RationalPoly:
    """
    節点値から P_A(K) の多項式を組み立てる（Π_K）

    Args:
        values: 節点値
        element: 要素

    Returns:
        Σ（節点値）×（双対基底）
    """
    if values.dim != element.dim:
        raise ValueError(f"節点値の次元 {values.dim} が要素の次元 {element.dim} と一致しません")
    return linear_combination(element.dim, zip(values.flat(), element.basis))


def canonical_interpolant(u: RationalPoly, element: AdiniElement) -> RationalPoly:
    """Π_K u（頂点での値と勾配が u と一致する P_A(K) の多項式）"""
    return interp_nodal(nodal_functionals(u, element.geometry), element)


def interp_function(v, box: Box) -> NodalValues:
    """
    関数 v の頂点値と勾配を節点値にする

    v が多項式（RationalPoly、または polynomial を持つ場）なら厳密値、
    それ以外は浮動小数点評価の値をそのまま有理数化する。

    Args:
        v: RationalPoly、または __call__ と gradient を持つ場
        box: 要素形状

    Returns:
        NodalValues
    """
    if isinstance(v, RationalPoly):
        return nodal_functionals(v, box)
    poly = getattr(v, "polynomial", None)
    if poly is not None:
        return nodal_functionals(poly, box)

    points = np.array([[float(c) for c in vertex] for vertex in box.vertices()])
    values = np.asarray(v(points), dtype=float)
    gradients = np.asarray(v.gradient(points), dtype=float)
    return NodalValues(tuple(
        VertexRecord(to_fraction(float(values[n])), tuple(to_fraction(float(g)) for g in gradients[n]))
        for n in range(points.shape[0])
    ))


def bilinear_basis(box: Box) -> List[RationalPoly]:
    """Q_1(K) のLagrange基底（辞書式頂点順）"""
    d = box.dim
    result = []
    for signs in box.vertex_signs():
        poly = RationalPoly.constant(d, 1)
        for k, s in enumerate(signs):
            # (1 + s ξ_k)/2, ξ_k = (x_k - c_k)/h_k
            h = box.half_lengths[k]
            factor = RationalPoly.linear(d, k, box.center[k]) * (Fraction(s) / (2 * h)) + Fraction(1, 2)
            poly = poly * factor
        result.append(poly)
    return result


def interp_bilinear(values: NodalValues, element_or_box) -> RationalPoly:
    """
    頂点値の Q_1(K) 補間（Π^1_K）。勾配成分は使わない。

    Args:
        values: 節点値
        element_or_box: AdiniElement または Box

    Returns:
        Q_1(K) の多項式
    """
    box = element_or_box.geometry if isinstance(element_or_box, AdiniElement) else element_or_box
    if values.dim != box.dim:
        raise ValueError(f"節点値の次元 {values.dim} が要素の次元 {box.dim} と一致しません")
    return linear_combination(
        box.dim,
        ((record.value, phi) for record, phi in zip(values.records, bilinear_basis(box)))
    )


def cell_average(p: RationalPoly, box: Box) -> Fraction:
    """Π_{0,K} p = (1/|K|) ∫_K p"""
    return p.integrate_box(box) / box.volume()


def r1(p: RationalPoly, box: Box) -> RationalPoly:
    """R^1_K p = p - Π^1_K p（全頂点で0になる）"""
    vertex_values = NodalValues(tuple(
        VertexRecord(p.eval(vertex), (Fraction(0),) * box.dim)
        for vertex in box.vertices()
    ))
    return p - interp_bilinear(vertex_values, box)


def b_coefficient(box: Box, i: int, j: int, alpha: Sequence[int]) -> RationalPoly:
    """
    面展開係数 B^K_i(j, α)
      = (1/α_j!) [(x_j - x_{j,c})^{α_j} - h_j^2 (x_j - x_{j,c})^{α_j - 2}] (x - x_c)^{α - e_i - α_j e_j}

    Args:
        box: 要素形状
        i, j: 軸（i ≠ j）
        alpha: M_{i,j} の多重指数

    Raises:
        MultiIndexError: alpha が M_{i,j} に含まれない場合
    """
    d = box.dim
    alpha = tuple(alpha)
    if len(alpha) != d or alpha not in set(m_indices(d, i, j)):
        raise MultiIndexError(f"α={alpha} は M_({i},{j}) に含まれません")

    y_j = RationalPoly.linear(d, j, box.center[j])
    h_j = box.half_lengths[j]
    bracket = (y_j ** alpha[j] - y_j ** (alpha[j] - 2) * (h_j * h_j)) * Fraction(1, factorial(alpha[j]))
    result = bracket
    for k in range(d):
        if k in (i, j):
            continue
        if alpha[k]:
            result = result * RationalPoly.linear(d, k, box.center[k]) ** alpha[k]
    return result


@dataclass(frozen=True)
class ShapeDerivatives:
    """
    基底関数の1階・2階導関数表

    Attributes:
        first: first[a][k] = ∂φ_a/∂x_k
        second: second[(i, j)][a] = ∂²φ_a/∂x_i∂x_j（i ≤ j）
    """
    first: Tuple[Tuple[RationalPoly, ...], ...]
    second: Dict[Tuple[int, int], Tuple[RationalPoly, ...]]

    def hessian_entry(self, a: int, i: int, j: int) -> RationalPoly:
        key = (i, j) if i <= j else (j, i)
        return self.second[key][a]


def shape_derivatives(element: AdiniElement) -> ShapeDerivatives:
    """
    基底関数の導関数表を作る（組立・検証用）

    Args:
        element: 要素

    Returns:
        ShapeDerivatives（2階は d(d+1)/2 種類）
    """
    return derivative_tables(element.basis, element.dim)


def derivative_tables(polys: Sequence[RationalPoly], d: int) -> ShapeDerivatives:
    first = tuple(tuple(p.diff(k) for k in range(d)) for p in polys)
    second = {}
    for i in range(d):
        for j in range(i, d):
            second[(i, j)] = tuple(first[a][i].diff(j) for a in range(len(polys)))
    return ShapeDerivatives(first=first, second=second)


def in_face_bubble_span(p: RationalPoly, box: Box, i: int) -> bool:
    """
    p ∈ S^i_K = span{((x_j - x_{j,c})^2 - h_j^2)・q̂ : q̂ ∈ Q_1^i(K), 1 ≤ j ≤ d} の厳密判定

    y = x - x_c で展開し、各生成元の先頭単項式 y_j^2 y^β で順に簡約する。
    余りが0なら所属する。

    Args:
        p: 多項式
        box: 要素形状
        i: Q_1^i の除外軸

    Returns:
        所属する場合True
    """
    d = box.dim
    terms = p.translate(box.center).terms
    while True:
        pending = [alpha for alpha in terms if any(e >= 2 for e in alpha)]
        if not pending:
            break
        alpha = max(pending, key=lambda a: (sum(a), a))
        coef = terms.pop(alpha)
        j = next(k for k, e in enumerate(alpha) if e >= 2)
        beta = alpha[:j] + (alpha[j] - 2,) + alpha[j + 1:]
        if beta[i] != 0 or any(e > 1 for e in beta):
            return False
        h_j = box.half_lengths[j]
        terms[beta] = terms.get(beta, Fraction(0)) + coef * h_j * h_j
        if not terms[beta]:
            del terms[beta]
    return not terms


# ----------------------------------------------------------------------
# 浮動小数点版の基底
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class FloatBasis:
    """
    多項式族の浮動小数点評価器

    Attributes:
        exponents: 単項式の指数 (m, d)
        coefficients: 係数行列 (m, n_basis)
    """
    exponents: np.ndarray
    coefficients: np.ndarray

    @classmethod
    def from_polys(cls, polys: Sequence[RationalPoly]) -> "FloatBasis":
        support = sorted({alpha for p in polys for alpha in p.support()})
        d = polys[0].dim
        exps = np.array(support, dtype=int).reshape(len(support), d)
        coefs = np.zeros((len(support), len(polys)))
        row = {alpha: r for r, alpha in enumerate(support)}
        for c, p in enumerate(polys):
            for alpha, value in p.items():
                coefs[row[alpha], c] = float(value)
        return cls(exponents=exps, coefficients=coefs)

    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    def evaluate(self, points: np.ndarray, alpha: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        ∂^α を点群で評価する

        Args:
            points: (npts, d)
            alpha: 微分の多重指数（Noneなら値）

        Returns:
            (npts, n_basis)
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        order = np.zeros(self.dim, dtype=int) if alpha is None else np.asarray(alpha, dtype=int)
        valid = np.all(self.exponents >= order[None, :], axis=1)
        factor = valid.astype(float)
        for k in range(self.dim):
            for t in range(order[k]):
                factor = factor * (self.exponents[:, k] - t)
        reduced = np.where(valid[:, None], self.exponents - order[None, :], 0)
        monos = np.prod(pts[:, None, :] ** reduced[None, :, :], axis=2)
        return monos @ (factor[:, None] * self.coefficients)


@dataclass(frozen=True)
class ReferenceTables:
    """
    参照要素 [-1,1]^d 上の基底の値表（組立・誤差計算用）

    物理要素では φ_a(x) = s_a φ̂_a(ξ)、ξ_k = (x_k - x_{k,c}) / h_k。
    s_a は値の自由度で1、∂/∂x_k の自由度で h_k。

    Attributes:
        dim: 次元
        rule: 1次元求積則
        points: 参照求積点 (nq, d)
        weights: 参照重み (nq,)
        values: φ̂ (nq, nloc)
        gradients: ∂φ̂/∂ξ_k (nq, d, nloc)
        hessians: ∂²φ̂/∂ξ_i∂ξ_j (nq, d, d, nloc)
        dof_axis: 各局所自由度の軸（値は VALUE_DOF）
    """
    dim: int
    rule: QuadRule
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray
    dof_axis: np.ndarray

    @property
    def n_local(self) -> int:
        return self.values.shape[1]

    def scale_factors(self, half_lengths: np.ndarray) -> np.ndarray:
        """
        要素ごとの自由度倍率 s (n_el, nloc)

        Args:
            half_lengths: (n_el, d)
        """
        half = np.atleast_2d(half_lengths)
        scales = np.ones((half.shape[0], self.n_local))
        for a, axis in enumerate(self.dof_axis):
            if axis != VALUE_DOF:
                scales[:, a] = half[:, axis]
        return scales


_TABLES_LOCK = threading.Lock()
_TABLES_CACHE: Dict[Tuple[int, int], ReferenceTables] = {}


def reference_tables(d: int, rule: QuadRule) -> ReferenceTables:
    """
    参照要素の値表を作る（(d, n) ごとにキャッシュ）

    Args:
        d: 次元
        rule: 1次元求積則

    Returns:
        ReferenceTables
    """
    key = (d, rule.points_per_axis)
    with _TABLES_LOCK:
        cached = _TABLES_CACHE.get(key)
    if cached is not None:
        return cached

    element = build_element(Box.reference(d))
    twin = element.float_twin
    points, weights = tensor_rule(rule, d)
    values = twin.evaluate(points)
    gradients = np.stack([twin.evaluate(points, unit_index(d, k)) for k in range(d)], axis=1)
    hessians = np.empty((points.shape[0], d, d, element.n_dofs))
    for i in range(d):
        for j in range(i, d):
            alpha = tuple(np.add(unit_index(d, i), unit_index(d, j)))
            block = twin.evaluate(points, alpha)
            hessians[:, i, j, :] = block
            hessians[:, j, i, :] = block
    dof_axis = np.array([axis for _, axis in local_dof_layout(d)], dtype=int)

    tables = ReferenceTables(
        dim=d,
        rule=rule,
        points=points,
        weights=weights,
        values=values,
        gradients=gradients,
        hessians=hessians,
        dof_axis=dof_axis
    )
    with _TABLES_LOCK:
        _TABLES_CACHE.setdefault(key, tables)
    logger.debug(f"参照値表を作成: d={d}, n={rule.points_per_axis}, 局所自由度={element.n_dofs}")
    return tables


def face_restrictions(p: RationalPoly, box: Box, axis: int) -> Tuple[RationalPoly, RationalPoly]:
    """(F'_{K,axis} への制限, F''_{K,axis} への制限)"""
    return p.restrict_face(axis, LOW, box), p.restrict_face(axis, HIGH, box)
