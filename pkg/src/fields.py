"""
スカラー場モジュール

任意階の偏導関数を点群で評価できるスカラー場 FieldFn と、
製造解 u1 = Π sin^2(π x_k)、u2 = Π x_k^2 (1 - x_k)^2、
およびテキスト定義の多項式解を提供します。
"""

from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.polyq import MultiIndex, RationalPoly, evaluate_arrays, unit_index
from utils.logger import setup_logger

logger = setup_logger(__name__)

DerivativeFn = Callable[[np.ndarray, MultiIndex], np.ndarray]
AxisFactor = Callable[[np.ndarray, int], np.ndarray]


class FieldFn:
    """
    点群で評価できるスカラー場

    derivative(points, alpha) が ∂^α を返す。多項式場では厳密な RationalPoly を保持する。
    """

    def __init__(
        self,
        dim: int,
        derivative_fn: DerivativeFn,
        name: str = "",
        polynomial: Optional[RationalPoly] = None
    ):
        self.dim = dim
        self._derivative_fn = derivative_fn
        self.name = name or "field"
        self.polynomial = polynomial

    @property
    def is_polynomial(self) -> bool:
        return self.polynomial is not None

    def _points(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"点の次元 {pts.shape[1]} が場の次元 {self.dim} と一致しません")
        return pts

    def derivative(self, points: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        """
        ∂^α を評価する

        Args:
            points: (npts, d)
            alpha: 多重指数

        Returns:
            (npts,)
        """
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim:
            raise ValueError(f"多重指数の長さ {len(alpha)} が次元 {self.dim} と一致しません")
        return np.asarray(self._derivative_fn(self._points(points), alpha), dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.derivative(points, (0,) * self.dim)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """(npts, d)"""
        return np.stack(
            [self.derivative(points, unit_index(self.dim, k)) for k in range(self.dim)],
            axis=-1
        )

    def hessian(self, points: np.ndarray) -> np.ndarray:
        """(npts, d, d)"""
        pts = self._points(points)
        result = np.empty((pts.shape[0], self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                alpha = np.add(unit_index(self.dim, i), unit_index(self.dim, j))
                values = self.derivative(pts, alpha)
                result[:, i, j] = values
                result[:, j, i] = values
        return result

    def bilaplacian(self, points: np.ndarray) -> np.ndarray:
        """Δ^2 = Σ_{i,j} ∂_i^2 ∂_j^2"""
        pts = self._points(points)
        total = np.zeros(pts.shape[0])
        for i in range(self.dim):
            for j in range(self.dim):
                alpha = np.add(unit_index(self.dim, i, 2), unit_index(self.dim, j, 2))
                total += self.derivative(pts, alpha)
        return total

    def __repr__(self) -> str:
        kind = "polynomial" if self.is_polynomial else "analytic"
        return f"FieldFn({self.name!r}, dim={self.dim}, {kind})"

    # ------------------------------------------------------------------
    # 生成
    # ------------------------------------------------------------------
    @classmethod
    def from_polynomial(cls, poly: RationalPoly, name: str = "") -> "FieldFn":
        """厳密な多項式を背後に持つ場（導関数は厳密に微分してから浮動小数点評価）"""
        cache: Dict[MultiIndex, Tuple[np.ndarray, np.ndarray]] = {}

        def derivative_fn(points: np.ndarray, alpha: MultiIndex) -> np.ndarray:
            arrays = cache.get(alpha)
            if arrays is None:
                arrays = poly.partial(alpha).to_arrays()
                cache[alpha] = arrays
            return evaluate_arrays(arrays[0], arrays[1], points)

        return cls(poly.dim, derivative_fn, name=name, polynomial=poly)

    @classmethod
    def separable(cls, factors: Sequence[AxisFactor], name: str = "") -> "FieldFn":
        """
        変数分離形 u(x) = Π_k g_k(x_k)

        Args:
            factors: g_k(t, n) が n 階導関数を返す関数の列
        """
        factors = list(factors)

        def derivative_fn(points: np.ndarray, alpha: MultiIndex) -> np.ndarray:
            result = np.ones(points.shape[0])
            for k, g in enumerate(factors):
                result = result * g(points[:, k], alpha[k])
            return result

        return cls(len(factors), derivative_fn, name=name)


def sin_squared(t: np.ndarray, order: int) -> np.ndarray:
    """
    g(t) = sin^2(π t) の order 階導関数

    g = (1 - cos 2πt)/2 より、order ≥ 1 で g^(n) = -(2π)^n cos(2πt + nπ/2) / 2。
    """
    if order == 0:
        return np.sin(np.pi * t) ** 2
    return -0.5 * (2 * np.pi) ** order * np.cos(2 * np.pi * t + order * np.pi / 2)


def bilaplacian_of(u: FieldFn) -> FieldFn:
    """
    f = Δ^2 u を表す場

    多項式なら厳密な4階微分、そうでなければ u の導関数を組み合わせて評価する。
    """
    name = f"bilaplacian({u.name})"
    if u.is_polynomial:
        poly = u.polynomial
        d = poly.dim
        f = RationalPoly.zero(d)
        for i in range(d):
            for j in range(d):
                f = f + poly.partial(np.add(unit_index(d, i, 2), unit_index(d, j, 2)))
        return FieldFn.from_polynomial(f, name=name)

    d = u.dim

    def derivative_fn(points: np.ndarray, alpha: MultiIndex) -> np.ndarray:
        total = np.zeros(points.shape[0])
        for i in range(d):
            for j in range(d):
                shifted = np.add(alpha, np.add(unit_index(d, i, 2), unit_index(d, j, 2)))
                total += u.derivative(points, shifted)
        return total

    return FieldFn(d, derivative_fn, name=name)


# ----------------------------------------------------------------------
# 製造解
# ----------------------------------------------------------------------
def solution_u1(d: int) -> FieldFn:
    """u1 = Π_k sin^2(π x_k)"""
    return FieldFn.separable([sin_squared] * d, name="u1")


def bubble_polynomial(d: int) -> RationalPoly:
    """Π_k x_k^2 (1 - x_k)^2"""
    result = RationalPoly.constant(d, 1)
    for k in range(d):
        x = RationalPoly.variable(d, k)
        factor = x * x * (1 - x) * (1 - x)
        result = result * factor
    return result


def solution_u2(d: int) -> FieldFn:
    """u2 = Π_k x_k^2 (1 - x_k)^2（多項式）"""
    return FieldFn.from_polynomial(bubble_polynomial(d), name="u2")


BUILTIN_SOLUTIONS: Dict[str, Callable[[int], FieldFn]] = {
    "u1": solution_u1,
    "u2": solution_u2,
}


def manufactured_solution(name: str, d: int) -> FieldFn:
    """
    組み込みの製造解を取得する

    Raises:
        ValueError: 未知の名前
    """
    if name not in BUILTIN_SOLUTIONS:
        raise ValueError(f"未知の解です: {name}（利用可能: {', '.join(sorted(BUILTIN_SOLUTIONS))}）")
    return BUILTIN_SOLUTIONS[name](d)


def parse_polynomial_text(text: str, d: int) -> RationalPoly:
    """
    1行1単項式 `coeff a1 … ad` 形式の多項式を読む（# 以降はコメント）

    Raises:
        ValueError: 形式不正
    """
    terms: Dict[MultiIndex, Fraction] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != d + 1:
            raise ValueError(f"{lineno}行目: 係数と指数 {d} 個が必要です: {raw!r}")
        try:
            coef = Fraction(tokens[0])
            alpha = tuple(int(t) for t in tokens[1:])
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"{lineno}行目: 数値として読めません: {raw!r}")
        if any(a < 0 for a in alpha):
            raise ValueError(f"{lineno}行目: 指数は0以上である必要があります: {raw!r}")
        terms[alpha] = terms.get(alpha, Fraction(0)) + coef
    poly = RationalPoly(d, terms)
    if poly.is_zero():
        logger.warning("読み込んだ多項式解が0です")
    return poly


def load_polynomial_solution(path: Union[str, Path], d: int) -> FieldFn:
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"解ファイルが見つかりません: {path}")
    poly = parse_polynomial_text(source.read_text(encoding="utf-8"), d)
    return FieldFn.from_polynomial(poly, name=source.stem)


# ----------------------------------------------------------------------
# 差分による整合性検査
# ----------------------------------------------------------------------
def check_gradient(field: FieldFn, points: np.ndarray, step: float = 1e-4) -> float:
    """
    1階導関数を5点中心差分と比較した相対誤差（最大値基準）

    Returns:
        max|差分 - 解析値| / max|解析値|
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    analytic = field.gradient(pts)
    numeric = np.empty_like(analytic)
    for k in range(field.dim):
        e = np.zeros(field.dim)
        e[k] = step
        numeric[:, k] = (
            -field(pts + 2 * e) + 8 * field(pts + e) - 8 * field(pts - e) + field(pts - 2 * e)
        ) / (12 * step)
    scale = max(float(np.max(np.abs(analytic))), np.finfo(float).tiny)
    return float(np.max(np.abs(numeric - analytic)) / scale)


def check_bilaplacian(u: FieldFn, f: FieldFn, points: np.ndarray, step: float = 1e-3) -> float:
    """
    f = Δ^2 u を、解析的な ∂_j^2 u に5点差分の ∂_i^2 を当てて検算した相対誤差
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = u.dim
    numeric = np.zeros(pts.shape[0])
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        for j in range(d):
            alpha = unit_index(d, j, 2)

            def g(x):
                return u.derivative(x, alpha)

            numeric += (
                -g(pts + 2 * e) + 16 * g(pts + e) - 30 * g(pts) + 16 * g(pts - e) - g(pts - 2 * e)
            ) / (12 * step * step)
    analytic = f(pts)
    scale = max(float(np.max(np.abs(analytic))), np.finfo(float).tiny)
    return float(np.max(np.abs(numeric - analytic)) / scale)
