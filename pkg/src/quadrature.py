"""
Gauss–Legendre求積モジュール

1次元Gauss–Legendre則（Legendre三項漸化式上のNewton法で節点を求める）と、
d次元直方体へのテンソル積写像を提供します。
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from src.polyq import Box

MAX_POINTS = 16
NEWTON_TOLERANCE = 1e-15
NEWTON_MAX_ITERATIONS = 100


class QuadratureError(ValueError):
    """求積則の点数が範囲外の場合のエラー"""


@dataclass(frozen=True)
class QuadRule:
    """
    1次元Gauss–Legendre則

    Attributes:
        points_per_axis: 点数 n
        nodes: (-1,1) 内の昇順節点
        weights: 正の重み（総和2）
    """
    points_per_axis: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def exact_degree(self) -> int:
        """1次元で厳密に積分できる最大次数 2n-1"""
        return 2 * self.points_per_axis - 1


def _legendre_with_previous(n: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """三項漸化式で (P_n(x), P_{n-1}(x)) を返す"""
    p_prev = np.ones_like(x)
    p_curr = x.copy()
    for j in range(2, n + 1):
        p_prev, p_curr = p_curr, ((2 * j - 1) * x * p_curr - (j - 1) * p_prev) / j
    return p_curr, p_prev


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadRule:
    """
    n点Gauss–Legendre則を生成する

    Args:
        n: 点数（1 ≤ n ≤ 16）

    Returns:
        QuadRule
    """
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_POINTS:
        raise QuadratureError(f"求積点数は1以上{MAX_POINTS}以下で指定してください: {n}")
    n = int(n)

    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(NEWTON_MAX_ITERATIONS):
        p_n, p_prev = _legendre_with_previous(n, x)
        dp = n * (x * p_n - p_prev) / (x * x - 1.0)
        step = p_n / dp
        x = x - step
        if np.max(np.abs(step)) < NEWTON_TOLERANCE:
            break

    p_n, p_prev = _legendre_with_previous(n, x)
    dp = n * (x * p_n - p_prev) / (x * x - 1.0)
    weights = 2.0 / ((1.0 - x * x) * dp * dp)

    order = np.argsort(x)
    x = x[order]
    weights = weights[order]
    # 原点対称に揃える
    x = 0.5 * (x - x[::-1])
    weights = 0.5 * (weights + weights[::-1])

    x.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(points_per_axis=n, nodes=x, weights=weights)


@lru_cache(maxsize=None)
def _tensor_cached(n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    rule = gauss_rule(n)
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def tensor_rule(rule: QuadRule, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    参照直方体 [-1,1]^d 上のテンソル積則

    Args:
        rule: 1次元則
        dim: 次元

    Returns:
        (点 (n^d, d), 重み (n^d,))。点の並びは第1軸が最も遅く変化する。
    """
    return _tensor_cached(rule.points_per_axis, dim)


def integrate_cell(
    f: Callable[[np.ndarray], np.ndarray],
    box: Box,
    rule: QuadRule
) -> float:
    """
    直方体上の積分をテンソル積Gauss則で近似する

    Args:
        f: 点群 (npts, d) を受け取り値 (npts,) を返す被積分関数
        box: 積分領域
        rule: 1次元則

    Returns:
        積分近似値（ヤコビアン Π h_i を含む）
    """
    center, half = box.as_floats()
    ref_points, weights = tensor_rule(rule, box.dim)
    points = center[None, :] + ref_points * half[None, :]
    values = np.asarray(f(points), dtype=float).reshape(-1)
    return float(np.prod(half) * np.dot(weights, values))
