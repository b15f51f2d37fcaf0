"""
構造補題チェッカーモジュール

乱数の有理数直方体と乱数多項式で、Adini要素の構造的性質を厳密に検証します。
各チェック関数は (OK: bool, エラーメッセージ: str) のタプルを返します。
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.analysis import LemmaReport, lemma24_sides
from src.element import (
    AdiniElement,
    b_coefficient,
    build_element,
    cell_average,
    in_face_bubble_span,
    interp_nodal,
    m_indices,
    nodal_functionals,
    r1,
    shape_monomials,
)
from src.polyq import (
    HIGH,
    LOW,
    Box,
    RationalPoly,
    linear_combination,
    monomials_up_to_total_degree,
    random_box,
    random_poly,
)
from utils.logger import setup_logger
from utils.parallel import parallel_map

logger = setup_logger(__name__)

CHECK_NAMES = (
    "unisolvence",
    "cubic_reproduction",
    "opposite_faces",
    "face_expansion",
    "bubble_span",
    "lemma24",
)


class LemmaChecker:
    """
    1つの直方体上で構造補題を検証するクラス
    """

    def __init__(self, box: Box, seed: int = 0):
        """
        初期化

        Args:
            box: 要素形状（有理数）
            seed: 乱数シード
        """
        self.box = box
        self.rng = np.random.default_rng(seed)
        self.dim = box.dim
        self._element = None

    @property
    def element(self) -> AdiniElement:
        if self._element is None:
            self._element = build_element(self.box)
        return self._element

    def random_adini(self) -> RationalPoly:
        """P_A(K) の乱数多項式"""
        return random_poly(self.rng, self.dim, shape_monomials(self.dim), center=self.box.center)

    def check_unisolvence(self) -> Tuple[bool, str]:
        """基底数 (d+1)・2^d、行列式 ≠ 0、節点行列が単位行列"""
        element = self.element
        expected = (self.dim + 1) * 2 ** self.dim
        if element.n_dofs != expected:
            return False, f"基底数 {element.n_dofs} が (d+1)・2^d = {expected} と一致しません"
        if element.vandermonde_det == 0:
            return False, f"{self.box} でVandermonde行列式が0です"
        matrix = element.nodal_matrix()
        for i, row in enumerate(matrix):
            for j, value in enumerate(row):
                if value != (1 if i == j else 0):
                    return False, f"{self.box} で節点行列の ({i},{j}) 成分が {value} です"
        for b in element.basis:
            if not element.contains(b):
                return False, f"{self.box} で基底が P_A(K) の外にあります: {b}"
        return True, ""

    def check_cubic_reproduction(self, trials: int) -> Tuple[bool, str]:
        """P_3(K) ⊂ P_A(K)：節点補間が3次多項式をそのまま再現する"""
        p3 = monomials_up_to_total_degree(self.dim, 3)
        for trial in range(trials):
            p = random_poly(self.rng, self.dim, p3, center=self.box.center)
            q = interp_nodal(nodal_functionals(p, self.box), self.element)
            if q != p:
                return False, f"試行 {trial}: 3次多項式 {p} が再現されません（得られた多項式 {q}）"
        return True, ""

    def check_opposite_faces(self, trials: int) -> Tuple[bool, str]:
        """R^1_K(∂w/∂x_i) の F'_{K,i} と F''_{K,i} への制限が一致する"""
        for trial in range(trials):
            w = self.random_adini()
            for i in range(self.dim):
                residual = r1(w.diff(i), self.box)
                low = residual.restrict_face(i, LOW, self.box)
                high = residual.restrict_face(i, HIGH, self.box)
                if low != high:
                    return False, f"試行 {trial}, 軸 {i}: 対面の制限が一致しません（{low} ≠ {high}）"
        return True, ""

    def face_expansion(self, w: RationalPoly, i: int, side: str) -> RationalPoly:
        """Σ_{j≠i} Σ_{α∈M_{i,j}} B^K_i(j,α)|_F ・Π_{0,K}(∂^α w)"""
        pairs = []
        for j in range(self.dim):
            if j == i:
                continue
            for alpha in m_indices(self.dim, i, j):
                average = cell_average(w.partial(alpha), self.box)
                if average:
                    pairs.append((average, b_coefficient(self.box, i, j, alpha).restrict_face(i, side, self.box)))
        return linear_combination(self.dim - 1, pairs)

    def check_face_expansion(self, trials: int) -> Tuple[bool, str]:
        """面への制限が B係数による展開と厳密に一致する"""
        for trial in range(trials):
            w = self.random_adini()
            for i in range(self.dim):
                residual = r1(w.diff(i), self.box)
                for side in (LOW, HIGH):
                    restricted = residual.restrict_face(i, side, self.box)
                    expansion = self.face_expansion(w, i, side)
                    if restricted != expansion:
                        return False, (
                            f"試行 {trial}, 軸 {i}, 面 {side}: 展開が一致しません"
                            f"（{restricted} ≠ {expansion}）"
                        )
        return True, ""

    def check_bubble_span(self, trials: int) -> Tuple[bool, str]:
        """R^1_K(∂w/∂x_i) が全頂点で0、かつ S^i_K に属する"""
        for trial in range(trials):
            w = self.random_adini()
            for i in range(self.dim):
                residual = r1(w.diff(i), self.box)
                nonzero = [v for v in self.box.vertices() if residual.eval(v) != 0]
                if nonzero:
                    return False, f"試行 {trial}, 軸 {i}: 頂点 {nonzero[0]} で0になりません"
                if not in_face_bubble_span(residual, self.box, i):
                    return False, f"試行 {trial}, 軸 {i}: {residual} が S^i_K に属しません"
        return True, ""

    def check_lemma24(self, trials: int) -> Tuple[bool, str]:
        """u ∈ P_4(K), v ∈ P_A(K) で (∇^2(u - Π_K u), ∇^2 v)_K = -Σ_i Σ_{j≠i} (h_j^2/3)∫ ∂_i^2∂_j^2 u ∂_i^2 v"""
        p4 = monomials_up_to_total_degree(self.dim, 4)
        for trial in range(trials):
            u = random_poly(self.rng, self.dim, p4, center=self.box.center)
            v = self.random_adini()
            lhs, rhs = lemma24_sides(u, v, self.element)
            if lhs != rhs:
                return False, f"試行 {trial}: 左辺 {lhs} ≠ 右辺 {rhs}（u={u}, v={v}）"
        return True, ""

    def validate_all(self, trials: int) -> Dict[str, Tuple[bool, str]]:
        """
        すべての検証を実行

        Args:
            trials: 各検証の乱数試行数

        Returns:
            検証名 -> (OK, エラーメッセージ)
        """
        results = {"unisolvence": self.check_unisolvence()}
        if not results["unisolvence"][0]:
            # 基底がなければ以降は検証できない
            for name in CHECK_NAMES[1:]:
                results[name] = (False, "単一解性の検証に失敗したため未実施")
            return results
        results["cubic_reproduction"] = self.check_cubic_reproduction(trials)
        results["opposite_faces"] = self.check_opposite_faces(trials)
        results["face_expansion"] = self.check_face_expansion(trials)
        results["bubble_span"] = self.check_bubble_span(trials)
        results["lemma24"] = self.check_lemma24(trials)
        return results


@dataclass(frozen=True)
class _BoxTask:
    index: int
    box: Box
    seed: int
    trials: int


def _run_box(task: _BoxTask) -> Dict[str, Tuple[bool, str]]:
    checker = LemmaChecker(task.box, seed=task.seed)
    results = checker.validate_all(task.trials)
    for name, (ok, msg) in results.items():
        if ok:
            logger.debug(f"直方体 {task.index}: {name} OK")
        else:
            logger.error(f"直方体 {task.index} ({task.box}): {name} 失敗: {msg}")
    return results


def random_boxes(d: int, count: int, seed: int) -> List[Box]:
    """検証用の乱数有理直方体（seed で決定的）"""
    rng = np.random.default_rng(seed)
    return [random_box(rng, d) for _ in range(count)]


def run_lemma_suite(
    d: int,
    trials: int = 20,
    boxes: int = 5,
    seed: int = 1,
    workers: int = 1,
    box_list: Sequence[Box] = None
) -> List[LemmaReport]:
    """
    構造補題の検証一式を実行する

    Args:
        d: 次元
        trials: 直方体あたりの乱数試行数
        boxes: 乱数直方体の個数
        seed: 乱数シード
        workers: スレッド数
        box_list: 検証する直方体（指定時は boxes を無視）

    Returns:
        検証名ごとの LemmaReport（CHECK_NAMES 順）
    """
    targets = list(box_list) if box_list is not None else random_boxes(d, boxes, seed)
    tasks = [
        _BoxTask(index=k, box=box, seed=seed * 1000 + k, trials=trials)
        for k, box in enumerate(targets)
    ]
    logger.info(f"構造補題の検証を開始: d={d}, 直方体 {len(tasks)} 個, 試行 {trials} 回/個")
    per_box = parallel_map(_run_box, tasks, workers=workers)

    reports = []
    for name in CHECK_NAMES:
        failures = tuple(
            f"直方体 {task.index}: {results[name][1]}"
            for task, results in zip(tasks, per_box)
            if not results[name][0]
        )
        count = len(tasks) if name == "unisolvence" else len(tasks) * trials
        report = LemmaReport(name=name, trials=count, failures=failures)
        logger.info(f"{name}: {'PASS' if report.passed else 'FAIL'}（{count} 件）")
        reports.append(report)
    return reports


