"""
有理数係数の多変数多項式モジュール

d次元直方体上での厳密な多項式演算（加算・乗算・微分・積分・面への制限）を提供します。
要素基底の構築と構造補題の検証は、すべてこのモジュールの厳密演算で行います。
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from numbers import Rational
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple, Union

import numpy as np

MultiIndex = Tuple[int, ...]
Scalar = Union[int, Fraction]

LOW = "low"
HIGH = "high"


class DimensionMismatchError(ValueError):
    """次元が一致しない多項式・点・直方体を組み合わせた場合のエラー"""


def to_fraction(value) -> Fraction:
    """
    int / Fraction / 文字列 / float を Fraction に変換する

    floatは2進表現のまま厳密に変換される（丸めは行わない）。
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational, str, float)):
        return Fraction(value)
    return Fraction(value)


def multi_index_add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


def unit_index(dim: int, axis: int, order: int = 1) -> MultiIndex:
    """axis番目だけがorderの多重指数 e_axis * order"""
    return tuple(order if k == axis else 0 for k in range(dim))


class RationalPoly:
    """
    有理数係数の多変数多項式

    terms は 多重指数 -> 係数 の写像で、係数0の項は保持しない（正規化済み）。
    インスタンスは不変として扱う。
    """

    __slots__ = ("dim", "_terms")

    def __init__(self, dim: int, terms: Mapping[MultiIndex, Scalar] = None):
        if dim < 0:
            raise ValueError(f"次元は0以上である必要があります: {dim}")
        self.dim = dim
        normalized: Dict[MultiIndex, Fraction] = {}
        for alpha, coef in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim:
                raise DimensionMismatchError(
                    f"多重指数の長さ {len(alpha)} が次元 {dim} と一致しません: {alpha}"
                )
            if any(a < 0 for a in alpha):
                raise ValueError(f"多重指数に負の成分があります: {alpha}")
            value = normalized.get(alpha, Fraction(0)) + to_fraction(coef)
            if value:
                normalized[alpha] = value
            else:
                normalized.pop(alpha, None)
        self._terms = normalized

    # ------------------------------------------------------------------
    # 生成
    # ------------------------------------------------------------------
    @classmethod
    def zero(cls, dim: int) -> "RationalPoly":
        return cls(dim)

    @classmethod
    def constant(cls, dim: int, value: Scalar) -> "RationalPoly":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def monomial(cls, dim: int, alpha: Sequence[int], coef: Scalar = 1) -> "RationalPoly":
        return cls(dim, {tuple(alpha): coef})

    @classmethod
    def variable(cls, dim: int, axis: int) -> "RationalPoly":
        return cls.monomial(dim, unit_index(dim, axis))

    @classmethod
    def linear(cls, dim: int, axis: int, shift: Scalar) -> "RationalPoly":
        """x_axis - shift"""
        return cls(dim, {unit_index(dim, axis): 1, (0,) * dim: -to_fraction(shift)})

    # ------------------------------------------------------------------
    # 基本プロパティ
    # ------------------------------------------------------------------
    @property
    def terms(self) -> Dict[MultiIndex, Fraction]:
        return dict(self._terms)

    def items(self) -> Iterator[Tuple[MultiIndex, Fraction]]:
        return iter(sorted(self._terms.items()))

    def coefficient(self, alpha: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(alpha), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def axis_degrees(self) -> MultiIndex:
        """各変数についての最大次数（零多項式は全て0）"""
        if not self._terms:
            return (0,) * self.dim
        return tuple(max(alpha[k] for alpha in self._terms) for k in range(self.dim))

    def total_degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(alpha) for alpha in self._terms)

    def support(self) -> List[MultiIndex]:
        return sorted(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        if not self._terms:
            return f"RationalPoly(dim={self.dim}, 0)"
        parts = []
        for alpha, coef in self.items():
            mono = "*".join(
                f"x{k + 1}" + (f"^{e}" if e > 1 else "")
                for k, e in enumerate(alpha) if e
            )
            parts.append(f"{coef}" + (f"*{mono}" if mono else ""))
        return f"RationalPoly(dim={self.dim}, {' + '.join(parts)})"

    # ------------------------------------------------------------------
    # 算術
    # ------------------------------------------------------------------
    def _check_same_dim(self, other: "RationalPoly") -> None:
        if self.dim != other.dim:
            raise DimensionMismatchError(
                f"多項式の次元が一致しません: {self.dim} と {other.dim}"
            )

    def _coerce(self, other) -> "RationalPoly":
        if isinstance(other, RationalPoly):
            self._check_same_dim(other)
            return other
        if isinstance(other, (int, Fraction, Rational)):
            return RationalPoly.constant(self.dim, other)
        return NotImplemented

    def __add__(self, other) -> "RationalPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for alpha, coef in other._terms.items():
            terms[alpha] = terms.get(alpha, Fraction(0)) + coef
        return RationalPoly(self.dim, terms)

    __radd__ = __add__

    def __neg__(self) -> "RationalPoly":
        return RationalPoly(self.dim, {alpha: -coef for alpha, coef in self._terms.items()})

    def __sub__(self, other) -> "RationalPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "RationalPoly":
        return (-self) + other

    def __mul__(self, other) -> "RationalPoly":
        if isinstance(other, (int, Fraction, Rational)):
            factor = to_fraction(other)
            return RationalPoly(self.dim, {a: c * factor for a, c in self._terms.items()})
        if not isinstance(other, RationalPoly):
            return NotImplemented
        self._check_same_dim(other)
        terms: Dict[MultiIndex, Fraction] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = multi_index_add(a, b)
                terms[key] = terms.get(key, Fraction(0)) + ca * cb
        return RationalPoly(self.dim, terms)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "RationalPoly":
        if exponent < 0:
            raise ValueError("負のべき乗は扱えません")
        result = RationalPoly.constant(self.dim, 1)
        for _ in range(exponent):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, RationalPoly):
            return self.dim == other.dim and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == RationalPoly.constant(self.dim, other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.dim, frozenset(self._terms.items())))

    # ------------------------------------------------------------------
    # 微分・積分
    # ------------------------------------------------------------------
    def diff(self, axis: int, order: int = 1) -> "RationalPoly":
        """
        axis方向の偏微分（order階）

        Args:
            axis: 0始まりの変数番号
            order: 微分階数

        Returns:
            偏導関数
        """
        if not 0 <= axis < self.dim:
            raise IndexError(f"axis {axis} は範囲外です（次元 {self.dim}）")
        terms: Dict[MultiIndex, Fraction] = {}
        for alpha, coef in self._terms.items():
            e = alpha[axis]
            if e < order:
                continue
            factor = 1
            for k in range(order):
                factor *= e - k
            new_alpha = alpha[:axis] + (e - order,) + alpha[axis + 1:]
            terms[new_alpha] = terms.get(new_alpha, Fraction(0)) + coef * factor
        return RationalPoly(self.dim, terms)

    def partial(self, alpha: Sequence[int]) -> "RationalPoly":
        """多重指数 alpha による偏微分 ∂^alpha"""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim:
            raise DimensionMismatchError(f"多重指数の長さが次元と一致しません: {alpha}")
        result = self
        for axis, order in enumerate(alpha):
            if order:
                result = result.diff(axis, order)
        return result

    def antiderivative(self, axis: int) -> "RationalPoly":
        """axis方向の不定積分（積分定数0）"""
        if not 0 <= axis < self.dim:
            raise IndexError(f"axis {axis} は範囲外です（次元 {self.dim}）")
        terms = {}
        for alpha, coef in self._terms.items():
            e = alpha[axis]
            new_alpha = alpha[:axis] + (e + 1,) + alpha[axis + 1:]
            terms[new_alpha] = coef / (e + 1)
        return RationalPoly(self.dim, terms)

    def integrate_box(self, box: "Box") -> Fraction:
        """
        直方体上の厳密な積分値

        各軸の単項式原始関数 (b^{k+1} - a^{k+1}) / (k+1) の積で計算する。
        """
        if box.dim != self.dim:
            raise DimensionMismatchError(
                f"多項式の次元 {self.dim} と直方体の次元 {box.dim} が一致しません"
            )
        lows = box.lower
        highs = box.upper
        total = Fraction(0)
        for alpha, coef in self._terms.items():
            value = coef
            for k, e in enumerate(alpha):
                value *= (highs[k] ** (e + 1) - lows[k] ** (e + 1)) / (e + 1)
            total += value
        return total

    # ------------------------------------------------------------------
    # 代入・評価
    # ------------------------------------------------------------------
    def restrict_face(self, axis: int, side: str, box: "Box") -> "RationalPoly":
        """
        面 x_axis = x_{axis,c} ∓ h_axis への制限（残りd-1変数の多項式）

        Args:
            axis: 固定する変数
            side: LOW（x_c - h）または HIGH（x_c + h）
            box: 直方体

        Returns:
            d-1変数の多項式
        """
        if box.dim != self.dim:
            raise DimensionMismatchError(
                f"多項式の次元 {self.dim} と直方体の次元 {box.dim} が一致しません"
            )
        return self.substitute(axis, box.face_coordinate(axis, side))

    def substitute(self, axis: int, value: Scalar) -> "RationalPoly":
        """x_axis に値を代入し、その変数を取り除いた多項式"""
        if not 0 <= axis < self.dim:
            raise IndexError(f"axis {axis} は範囲外です（次元 {self.dim}）")
        value = to_fraction(value)
        terms: Dict[MultiIndex, Fraction] = {}
        for alpha, coef in self._terms.items():
            key = alpha[:axis] + alpha[axis + 1:]
            terms[key] = terms.get(key, Fraction(0)) + coef * value ** alpha[axis]
        return RationalPoly(self.dim - 1, terms)

    def eval(self, point: Sequence[Scalar]) -> Fraction:
        """
        厳密な点評価（変数ごとのHorner法）

        Args:
            point: 長さdimの座標

        Returns:
            値
        """
        if len(point) != self.dim:
            raise DimensionMismatchError(
                f"点の次元 {len(point)} が多項式の次元 {self.dim} と一致しません"
            )
        coords = [to_fraction(v) for v in point]
        if self.dim == 0:
            return self._terms.get((), Fraction(0))
        return _horner(self._terms, coords)

    def eval_naive(self, point: Sequence[Scalar]) -> Fraction:
        """単項式ごとの素朴な総和による評価（Horner評価の検算用）"""
        if len(point) != self.dim:
            raise DimensionMismatchError(
                f"点の次元 {len(point)} が多項式の次元 {self.dim} と一致しません"
            )
        coords = [to_fraction(v) for v in point]
        total = Fraction(0)
        for alpha, coef in self._terms.items():
            value = coef
            for x, e in zip(coords, alpha):
                value *= x ** e
            total += value
        return total

    def translate(self, offset: Sequence[Scalar]) -> "RationalPoly":
        """
        平行移動 q(x) = p(x + offset) を展開した多項式

        Args:
            offset: 長さdimのずらし量

        Returns:
            展開済みの多項式
        """
        if len(offset) != self.dim:
            raise DimensionMismatchError(f"ずらし量の次元が一致しません: {offset}")
        shift = [to_fraction(v) for v in offset]
        terms: Dict[MultiIndex, Fraction] = {}
        for alpha, coef in self._terms.items():
            per_axis = [
                [(k, comb(e, k) * shift[axis] ** (e - k)) for k in range(e + 1)]
                for axis, e in enumerate(alpha)
            ]
            for combo in itertools.product(*per_axis):
                key = tuple(k for k, _ in combo)
                value = coef
                for _, factor in combo:
                    value *= factor
                terms[key] = terms.get(key, Fraction(0)) + value
        return RationalPoly(self.dim, terms)

    def scale_axes(self, factors: Sequence[Scalar]) -> "RationalPoly":
        """q(x) = p(factors * x)（軸ごとの拡大縮小）"""
        if len(factors) != self.dim:
            raise DimensionMismatchError(f"倍率の次元が一致しません: {factors}")
        scale = [to_fraction(v) for v in factors]
        terms = {}
        for alpha, coef in self._terms.items():
            value = coef
            for s, e in zip(scale, alpha):
                value *= s ** e
            terms[alpha] = value
        return RationalPoly(self.dim, terms)

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        浮動小数点評価用の (指数配列 (m, dim), 係数配列 (m,)) を返す
        """
        if not self._terms:
            return np.zeros((0, self.dim), dtype=int), np.zeros(0)
        items = sorted(self._terms.items())
        exps = np.array([alpha for alpha, _ in items], dtype=int).reshape(len(items), self.dim)
        coefs = np.array([float(c) for _, c in items])
        return exps, coefs


def _horner(terms: Mapping[MultiIndex, Fraction], coords: List[Fraction]) -> Fraction:
    """先頭変数についてHorner法で評価し、係数多項式は再帰的に評価する"""
    if not terms:
        return Fraction(0)
    if len(coords) == 1:
        by_power = {alpha[0]: coef for alpha, coef in terms.items()}
        result = Fraction(0)
        for power in range(max(by_power), -1, -1):
            result = result * coords[0] + by_power.get(power, 0)
        return result

    grouped: Dict[int, Dict[MultiIndex, Fraction]] = {}
    for alpha, coef in terms.items():
        grouped.setdefault(alpha[0], {})[alpha[1:]] = coef
    result = Fraction(0)
    for power in range(max(grouped), -1, -1):
        inner = grouped.get(power)
        result = result * coords[0] + (_horner(inner, coords[1:]) if inner else 0)
    return result


@dataclass(frozen=True)
class Box:
    """
    軸平行なd次元直方体 K = {x_c + ξ∘h : ξ ∈ [-1,1]^d}

    Attributes:
        center: 中心座標 x_c（有理数）
        half_lengths: 各軸の半幅 h_i（正の有理数）
    """
    center: Tuple[Fraction, ...]
    half_lengths: Tuple[Fraction, ...]

    def __post_init__(self):
        center = tuple(to_fraction(v) for v in self.center)
        half = tuple(to_fraction(v) for v in self.half_lengths)
        if len(center) != len(half):
            raise DimensionMismatchError(
                f"中心 {len(center)} 次元と半幅 {len(half)} 次元が一致しません"
            )
        if not center:
            raise ValueError("直方体の次元は1以上である必要があります")
        if any(h <= 0 for h in half):
            raise ValueError(f"半幅はすべて正である必要があります: {half}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_lengths", half)

    @classmethod
    def from_bounds(cls, lower: Sequence[Scalar], upper: Sequence[Scalar]) -> "Box":
        lo = [to_fraction(v) for v in lower]
        hi = [to_fraction(v) for v in upper]
        return cls(
            tuple((a + b) / 2 for a, b in zip(lo, hi)),
            tuple((b - a) / 2 for a, b in zip(lo, hi))
        )

    @classmethod
    def reference(cls, dim: int) -> "Box":
        """参照要素 [-1,1]^d"""
        return cls((Fraction(0),) * dim, (Fraction(1),) * dim)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def lower(self) -> Tuple[Fraction, ...]:
        return tuple(c - h for c, h in zip(self.center, self.half_lengths))

    @property
    def upper(self) -> Tuple[Fraction, ...]:
        return tuple(c + h for c, h in zip(self.center, self.half_lengths))

    def volume(self) -> Fraction:
        result = Fraction(1)
        for h in self.half_lengths:
            result *= 2 * h
        return result

    def diameter_squared(self) -> Fraction:
        return sum((2 * h) ** 2 for h in self.half_lengths)

    def vertex_signs(self) -> List[Tuple[int, ...]]:
        """(ξ_1,…,ξ_d) ∈ {-1,+1}^d の辞書式順序"""
        return list(itertools.product((-1, 1), repeat=self.dim))

    def vertices(self) -> List[Tuple[Fraction, ...]]:
        return [
            tuple(c + s * h for c, s, h in zip(self.center, signs, self.half_lengths))
            for signs in self.vertex_signs()
        ]

    def face_coordinate(self, axis: int, side: str) -> Fraction:
        if side == LOW:
            return self.center[axis] - self.half_lengths[axis]
        if side == HIGH:
            return self.center[axis] + self.half_lengths[axis]
        raise ValueError(f"side は '{LOW}' か '{HIGH}' を指定してください: {side}")

    def as_floats(self) -> Tuple[np.ndarray, np.ndarray]:
        return (
            np.array([float(c) for c in self.center]),
            np.array([float(h) for h in self.half_lengths])
        )


# ----------------------------------------------------------------------
# 関数形式のインターフェース
# ----------------------------------------------------------------------
def add(p: RationalPoly, q: RationalPoly) -> RationalPoly:
    """p + q（次元不一致は DimensionMismatchError）"""
    p._check_same_dim(q)
    return p + q


def mul(p: RationalPoly, q: RationalPoly) -> RationalPoly:
    """p * q（次元不一致は DimensionMismatchError）"""
    p._check_same_dim(q)
    return p * q


def diff(p: RationalPoly, axis: int) -> RationalPoly:
    return p.diff(axis)


def integrate_box(p: RationalPoly, box: Box) -> Fraction:
    return p.integrate_box(box)


def restrict_face(p: RationalPoly, axis: int, side: str, box: Box) -> RationalPoly:
    return p.restrict_face(axis, side, box)


def evaluate(p: RationalPoly, point: Sequence[Scalar]) -> Fraction:
    return p.eval(point)


def monomials_up_to_total_degree(dim: int, degree: int) -> List[MultiIndex]:
    """全次数 degree 以下の単項式の多重指数（P_degree の基底）"""
    return [
        alpha for alpha in itertools.product(range(degree + 1), repeat=dim)
        if sum(alpha) <= degree
    ]


def linear_combination(dim: int, pairs: Iterable[Tuple[Scalar, RationalPoly]]) -> RationalPoly:
    """Σ c_k p_k"""
    terms: Dict[MultiIndex, Fraction] = {}
    for coef, poly in pairs:
        c = to_fraction(coef)
        if not c:
            continue
        for alpha, value in poly._terms.items():
            terms[alpha] = terms.get(alpha, Fraction(0)) + c * value
    return RationalPoly(dim, terms)


def evaluate_arrays(exps: np.ndarray, coefs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    to_arrays() の結果を点群 (npts, dim) で浮動小数点評価する

    Returns:
        (npts,) の値
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if exps.shape[0] == 0:
        return np.zeros(points.shape[0])
    monos = np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
    return monos @ coefs


# ----------------------------------------------------------------------
# 乱数による有理数データ（検証用）
# ----------------------------------------------------------------------
def random_rational(rng: np.random.Generator, max_numerator: int = 9, max_denominator: int = 6) -> Fraction:
    """分子 [-max_numerator, max_numerator]、分母 [1, max_denominator] の乱数有理数"""
    numerator = int(rng.integers(-max_numerator, max_numerator + 1))
    denominator = int(rng.integers(1, max_denominator + 1))
    return Fraction(numerator, denominator)


def random_poly(
    rng: np.random.Generator,
    dim: int,
    monomials: Sequence[MultiIndex],
    center: Sequence[Scalar] = None
) -> RationalPoly:
    """
    与えた単項式 (x - center)^α の乱数有理係数の線形結合

    Args:
        rng: 乱数生成器
        dim: 次元
        monomials: 多重指数の列
        center: 展開中心（Noneなら原点）
    """
    local = RationalPoly(dim, {tuple(alpha): random_rational(rng) for alpha in monomials})
    if center is None:
        return local
    return local.translate(tuple(-to_fraction(c) for c in center))


def random_box(rng: np.random.Generator, dim: int) -> Box:
    """中心 [-2,2]^d、半幅 (0,2] の乱数有理直方体"""
    center = tuple(Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 5))) for _ in range(dim))
    half = tuple(Fraction(int(rng.integers(1, 9)), int(rng.integers(1, 5))) for _ in range(dim))
    half = tuple(min(h, Fraction(2)) for h in half)
    return Box(center, half)
