"""
線形ソルバーモジュール

Jacobi前処理付き共役勾配法と、対称ピボット付き密行列ソルバー（小規模・検算用）。
"""

import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import cg

from src.assembly import SparseSym
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAXIT_FACTOR = 50

MatrixLike = Union[SparseSym, sparse.spmatrix, np.ndarray]


@dataclass(frozen=True)
class SolveReport:
    """
    求解結果の記録

    Attributes:
        iterations: 反復回数（直接法は0）
        residual: 最終相対残差 ‖b - Ax‖ / ‖b‖
        seconds: 経過時間
        method: "cg" または "dense"
    """
    iterations: int
    residual: float
    seconds: float
    method: str = "cg"


class SolverError(RuntimeError):
    """反復が収束しなかった、または解けなかった"""

    def __init__(self, message: str, x: Optional[np.ndarray] = None, report: Optional[SolveReport] = None):
        super().__init__(message)
        self.x = x
        self.report = report


class SingularMatrixError(SolverError):
    """行列が作業精度で特異"""


def default_maxit(n: int, factor: float = DEFAULT_MAXIT_FACTOR) -> int:
    """既定の最大反復回数 factor・√n"""
    return max(1, int(math.ceil(factor * math.sqrt(max(n, 1)))))


def _as_matrix(A: MatrixLike):
    if isinstance(A, SparseSym):
        return A.matrix
    return A


def _relative_residual(A, x: np.ndarray, b: np.ndarray) -> float:
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return float(np.linalg.norm(A @ x))
    return float(np.linalg.norm(b - A @ x) / norm_b)


def cg_solve(
    A: MatrixLike,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    maxit: Optional[int] = None
) -> Tuple[np.ndarray, SolveReport]:
    """
    対角（Jacobi）前処理付きCG法

    Args:
        A: 対称正定値行列
        b: 右辺
        tol: 相対残差の許容値
        maxit: 最大反復回数（Noneなら 50√n）

    Returns:
        (解, SolveReport)

    Raises:
        ValueError: 次元不一致・tol ≤ 0
        SolverError: 最大反復回数内に収束しない場合（最良の反復解を保持）
    """
    matrix = _as_matrix(A)
    b = np.asarray(b, dtype=float)
    n = matrix.shape[0]
    if matrix.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"次元が一致しません: A {matrix.shape}, b {b.shape}")
    if tol <= 0:
        raise ValueError(f"tol は正である必要があります: {tol}")
    maxit = default_maxit(n) if maxit is None else int(maxit)

    start = time.perf_counter()
    if not np.any(b):
        return np.zeros(n), SolveReport(0, 0.0, time.perf_counter() - start, "cg")

    diagonal = np.asarray(matrix.diagonal(), dtype=float)
    if np.any(diagonal <= 0):
        message = "対角成分に正でない値があります（正定値ではありません）"
        logger.error(message)
        raise SolverError(message)
    preconditioner = sparse.diags(1.0 / diagonal)

    iterations = 0
    best_x = np.zeros(n)
    best_residual = 1.0

    def track(xk):
        nonlocal iterations, best_x, best_residual
        iterations += 1
        current = _relative_residual(matrix, xk, b)
        if current < best_residual:
            best_x = np.array(xk, dtype=float, copy=True)
            best_residual = current

    x, info = cg(matrix, b, rtol=tol, atol=0.0, maxiter=maxit, M=preconditioner, callback=track)
    residual = _relative_residual(matrix, x, b)

    if info != 0:
        # 未収束時は残差最小の反復解を返す
        if residual < best_residual:
            best_x, best_residual = x, residual
        report = SolveReport(iterations, best_residual, time.perf_counter() - start, "cg")
        message = (
            f"CGが収束しませんでした: 反復 {iterations}/{maxit}, 最良の相対残差 {best_residual:.3e} > {tol:.1e}"
        )
        logger.error(message)
        raise SolverError(message, x=best_x, report=report)

    report = SolveReport(iterations, residual, time.perf_counter() - start, "cg")
    logger.info(f"CG収束: n={n}, 反復 {iterations}, 相対残差 {residual:.3e}")
    return x, report


def dense_solve(A: MatrixLike, b: np.ndarray) -> np.ndarray:
    """
    密行列の対称ピボット付き消去（Bunch–Kaufman）

    Args:
        A: 対称正則行列
        b: 右辺

    Returns:
        解

    Raises:
        SingularMatrixError: 作業精度で特異な場合
    """
    matrix = _as_matrix(A)
    if sparse.issparse(matrix):
        matrix = matrix.toarray()
    matrix = np.asarray(matrix, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        x = scipy.linalg.solve(matrix, b, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        message = f"行列が特異です: {exc}"
        logger.error(message)
        raise SingularMatrixError(message) from exc
    if not np.all(np.isfinite(x)):
        message = "行列が特異です: 解に非有限値が含まれます"
        logger.error(message)
        raise SingularMatrixError(message)
    return x


def solve(
    A: MatrixLike,
    b: np.ndarray,
    method: str = "cg",
    tol: float = DEFAULT_TOL,
    maxit: Optional[int] = None
) -> Tuple[np.ndarray, SolveReport]:
    """
    method に応じて CG または密行列ソルバーで解く

    Args:
        method: "cg" / "dense"
    """
    if method == "cg":
        return cg_solve(A, b, tol=tol, maxit=maxit)
    if method == "dense":
        start = time.perf_counter()
        x = dense_solve(A, b)
        matrix = _as_matrix(A)
        report = SolveReport(0, _relative_residual(matrix, x, np.asarray(b, dtype=float)),
                             time.perf_counter() - start, "dense")
        logger.info(f"密行列ソルバー: n={len(x)}, 相対残差 {report.residual:.3e}")
        return x, report
    raise ValueError(f"未知のソルバーです: {method}")
