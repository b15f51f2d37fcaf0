"""
組立モジュール

破れHessian双一次形式 a_h(u,v) = Σ_K Σ_{i,j} ∫_K ∂_ij u ∂_ij v の剛性行列と
荷重ベクトル (f, v) を V_h0 上で組み立てます。境界頂点の自由度は消去します。

要素計算は参照要素の値表を半幅でスケールして一括で行い、
大域への加算は COO → CSR 変換（重複の和）で行います。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse

from src.element import AdiniElement, ReferenceTables, reference_tables
from src.fields import FieldFn
from src.mesh import BoxMesh, DofMap
from src.polyq import unit_index
from src.quadrature import QuadRule, tensor_rule
from utils.logger import setup_logger

logger = setup_logger(__name__)


class NoFreeDofsError(ValueError):
    """内部頂点がなく非固定自由度が存在しない（メッシュが粗すぎる）"""


@dataclass(frozen=True)
class SparseSym:
    """
    対称疎行列（非固定自由度のみで番号付け）

    Attributes:
        matrix: CSR形式の行列
    """
    matrix: sparse.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def quadratic_form(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))

    def is_symmetric(self) -> bool:
        """(i,j) と (j,i) が完全一致するか"""
        difference = self.matrix - self.matrix.T
        return difference.count_nonzero() == 0

    def dump(self, path: Union[str, Path]) -> None:
        """
        座標形式で書き出す（1行目 `n nnz`、以降 `i j value`、有効数字17桁）
        """
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as out:
            out.write(f"{self.n} {coo.nnz}\n")
            for k in order:
                out.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")
        logger.info(f"行列を保存しました: {target}（n={self.n}, nnz={coo.nnz}）")


# ----------------------------------------------------------------------
# 要素行列
# ----------------------------------------------------------------------
def local_stiffness(element: AdiniElement, rule: QuadRule) -> np.ndarray:
    """
    1要素の剛性行列 (a,b) = Σ_{i,j} ∫_K ∂_ij φ_a ∂_ij φ_b

    要素自身の浮動小数点基底を写像した求積点で評価する（一括版の検算用）。

    Args:
        element: 要素
        rule: 1次元求積則

    Returns:
        (nloc, nloc) の対称行列
    """
    d = element.dim
    _, half = element.geometry.as_floats()
    ref_points, weights = tensor_rule(rule, d)
    local_points = ref_points * half[None, :]
    jacobian = float(np.prod(half))
    twin = element.float_twin

    matrix = np.zeros((element.n_dofs, element.n_dofs))
    for i in range(d):
        for j in range(d):
            alpha = tuple(np.add(unit_index(d, i), unit_index(d, j)))
            second = twin.evaluate(local_points, alpha)
            matrix += second.T @ (weights[:, None] * second)
    matrix *= jacobian
    return 0.5 * (matrix + matrix.T)


def _hessian_grams(tables: ReferenceTables) -> np.ndarray:
    """G_ij = Ĥ_ijᵀ diag(w) Ĥ_ij (d, d, nloc, nloc)"""
    d = tables.dim
    grams = np.empty((d, d, tables.n_local, tables.n_local))
    for i in range(d):
        for j in range(d):
            block = tables.hessians[:, i, j, :]
            gram = block.T @ (tables.weights[:, None] * block)
            grams[i, j] = 0.5 * (gram + gram.T)
    return grams


def local_stiffness_batch(tables: ReferenceTables, half_lengths: np.ndarray) -> np.ndarray:
    """
    全要素の剛性行列

    K_e = J_e Σ_{i,j} (s_e s_eᵀ) ∘ G_ij / (h_i^2 h_j^2)、J_e = Π h_k。

    Args:
        tables: 参照値表
        half_lengths: (n_el, d)

    Returns:
        (n_el, nloc, nloc)
    """
    half = np.atleast_2d(np.asarray(half_lengths, dtype=float))
    grams = _hessian_grams(tables)
    jacobian = np.prod(half, axis=1)
    inv_sq = 1.0 / (half * half)
    coefficients = jacobian[:, None, None] * inv_sq[:, :, None] * inv_sq[:, None, :]
    stiffness = np.einsum("eij,ijab->eab", coefficients, grams)
    stiffness = 0.5 * (stiffness + stiffness.transpose(0, 2, 1))
    scales = tables.scale_factors(half)
    return stiffness * (scales[:, :, None] * scales[:, None, :])


@dataclass(frozen=True)
class ElementQuadrature:
    """
    全要素の物理求積点と重み

    Attributes:
        tables: 参照値表
        points: (n_el, nq, d)
        weights: ヤコビアン込みの重み (n_el, nq)
        half_lengths: (n_el, d)
        scales: 自由度倍率 (n_el, nloc)
    """
    tables: ReferenceTables
    points: np.ndarray
    weights: np.ndarray
    half_lengths: np.ndarray
    scales: np.ndarray

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, self.points.shape[-1])

    def integrate(self, values: np.ndarray) -> float:
        """(n_el, nq) の値の全領域積分"""
        return float(np.sum(self.weights * values))

    def per_element(self, values: np.ndarray) -> np.ndarray:
        return np.sum(self.weights * values, axis=1)

    def field_values(self, u: FieldFn, alpha: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        """u の ∂^α を全求積点で評価 (n_el, nq)"""
        alpha = (0,) * u.dim if alpha is None else alpha
        return u.derivative(self.flat_points, alpha).reshape(self.weights.shape)

    def field_hessian(self, u: FieldFn) -> np.ndarray:
        n_el, nq = self.weights.shape
        return u.hessian(self.flat_points).reshape(n_el, nq, u.dim, u.dim)

    def field_gradient(self, u: FieldFn) -> np.ndarray:
        n_el, nq = self.weights.shape
        return u.gradient(self.flat_points).reshape(n_el, nq, u.dim)


def element_quadrature(mesh: BoxMesh, rule: QuadRule) -> ElementQuadrature:
    """
    メッシュ全体の求積データを作る

    Args:
        mesh: メッシュ
        rule: 1次元求積則

    Returns:
        ElementQuadrature
    """
    tables = reference_tables(mesh.dim, rule)
    centers, halves = mesh.element_geometry()
    points = centers[:, None, :] + tables.points[None, :, :] * halves[:, None, :]
    weights = np.prod(halves, axis=1)[:, None] * tables.weights[None, :]
    return ElementQuadrature(
        tables=tables,
        points=points,
        weights=weights,
        half_lengths=halves,
        scales=tables.scale_factors(halves)
    )


# ----------------------------------------------------------------------
# 大域組立
# ----------------------------------------------------------------------
def assemble(
    mesh: BoxMesh,
    dofs: DofMap,
    rule: QuadRule,
    constrained: bool = True
) -> SparseSym:
    """
    剛性行列を組み立てる

    Args:
        mesh: メッシュ
        dofs: 自由度番号付け
        rule: 組立用の1次元求積則
        constrained: Trueなら境界自由度を消去、Falseなら全自由度で組み立てる

    Returns:
        SparseSym

    Raises:
        NoFreeDofsError: 非固定自由度がない場合
    """
    if constrained and dofs.n_free == 0:
        message = (
            f"非固定自由度がありません（要素数 {mesh.counts}、内部頂点 0）。"
            f"各軸2分割以上のメッシュを指定してください"
        )
        logger.error(message)
        raise NoFreeDofsError(message)

    tables = reference_tables(mesh.dim, rule)
    _, halves = mesh.element_geometry()
    stiffness = local_stiffness_batch(tables, halves)

    if constrained:
        index = dofs.element_free_dofs
        size = dofs.n_free
    else:
        index = dofs.element_dofs
        size = dofs.total_dofs

    rows = np.broadcast_to(index[:, :, None], stiffness.shape)
    cols = np.broadcast_to(index[:, None, :], stiffness.shape)
    keep = (rows >= 0) & (cols >= 0)
    matrix = sparse.coo_matrix(
        (stiffness[keep], (rows[keep], cols[keep])),
        shape=(size, size)
    ).tocsr()
    # 重複の加算順に依らず (i,j) と (j,i) を一致させる
    matrix = ((matrix + matrix.T) * 0.5).tocsr()
    matrix.sum_duplicates()

    logger.info(f"剛性行列を組み立てました: n={size}, nnz={matrix.nnz}, 要素数={mesh.n_elements}")
    return SparseSym(matrix)


def load_vector(
    f: FieldFn,
    mesh: BoxMesh,
    dofs: DofMap,
    rule: QuadRule,
    constrained: bool = True
) -> np.ndarray:
    """
    荷重ベクトル b_a = Σ_K ∫_K f φ_a

    Args:
        f: 右辺
        mesh: メッシュ
        dofs: 自由度番号付け
        rule: 求積則
        constrained: Trueなら非固定自由度のみ

    Returns:
        (n_free,) または (total_dofs,)
    """
    quad = element_quadrature(mesh, rule)
    fvals = quad.field_values(f)
    local = (fvals * quad.weights) @ quad.tables.values * quad.scales

    if constrained:
        index = dofs.element_free_dofs
        result = np.zeros(dofs.n_free)
    else:
        index = dofs.element_dofs
        result = np.zeros(dofs.total_dofs)
    keep = index >= 0
    np.add.at(result, index[keep], local[keep])
    return result


# ----------------------------------------------------------------------
# 離散関数
# ----------------------------------------------------------------------
class DiscreteField:
    """
    V_h の関数（全自由度の係数ベクトルで表す）

    Attributes:
        dofs: 自由度番号付け
        coefficients: (total_dofs,)
    """

    def __init__(self, dofs: DofMap, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (dofs.total_dofs,):
            raise ValueError(
                f"係数ベクトルの長さ {coefficients.shape} が自由度数 {dofs.total_dofs} と一致しません"
            )
        self.dofs = dofs
        self.coefficients = coefficients

    @property
    def mesh(self) -> BoxMesh:
        return self.dofs.mesh

    @classmethod
    def zero(cls, dofs: DofMap) -> "DiscreteField":
        return cls(dofs, np.zeros(dofs.total_dofs))

    @classmethod
    def from_free(cls, dofs: DofMap, x: np.ndarray) -> "DiscreteField":
        """非固定自由度の値から（固定自由度は0）"""
        x = np.asarray(x, dtype=float)
        if x.shape != (dofs.n_free,):
            raise ValueError(f"ベクトルの長さ {x.shape} が非固定自由度数 {dofs.n_free} と一致しません")
        coefficients = np.zeros(dofs.total_dofs)
        coefficients[dofs.free] = x
        return cls(dofs, coefficients)

    @classmethod
    def interpolate(cls, u: FieldFn, dofs: DofMap) -> "DiscreteField":
        """
        大域節点補間 Π_h u（全頂点の厳密な値と勾配）

        Args:
            u: 場
            dofs: 自由度番号付け
        """
        mesh = dofs.mesh
        d = mesh.dim
        grids = np.meshgrid(*mesh.float_breakpoints, indexing="ij")
        vertices = np.stack([g.ravel() for g in grids], axis=1)
        nodal = np.empty((vertices.shape[0], d + 1))
        nodal[:, 0] = u(vertices)
        nodal[:, 1:] = u.gradient(vertices)
        return cls(dofs, nodal.ravel())

    def free_vector(self) -> np.ndarray:
        return self.coefficients[self.dofs.free]

    def constrained_part_is_zero(self, atol: float = 0.0) -> bool:
        mask = np.ones(self.dofs.total_dofs, dtype=bool)
        mask[self.dofs.free] = False
        return bool(np.all(np.abs(self.coefficients[mask]) <= atol))

    def __add__(self, other: "DiscreteField") -> "DiscreteField":
        return DiscreteField(self.dofs, self.coefficients + other.coefficients)

    def __sub__(self, other: "DiscreteField") -> "DiscreteField":
        return DiscreteField(self.dofs, self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "DiscreteField":
        return DiscreteField(self.dofs, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def element_coefficients(self, scales: np.ndarray) -> np.ndarray:
        """参照基底に対する要素係数 s_e ∘ c_e (n_el, nloc)"""
        return self.coefficients[self.dofs.element_dofs] * scales

    def values(self, quad: ElementQuadrature) -> np.ndarray:
        """(n_el, nq)"""
        local = self.element_coefficients(quad.scales)
        return local @ quad.tables.values.T

    def gradients(self, quad: ElementQuadrature) -> np.ndarray:
        """(n_el, nq, d)"""
        local = self.element_coefficients(quad.scales)
        reference = np.einsum("qka,ea->eqk", quad.tables.gradients, local)
        return reference / quad.half_lengths[:, None, :]

    def hessians(self, quad: ElementQuadrature) -> np.ndarray:
        """(n_el, nq, d, d)"""
        local = self.element_coefficients(quad.scales)
        reference = np.einsum("qija,ea->eqij", quad.tables.hessians, local)
        halves = quad.half_lengths
        return reference / (halves[:, None, :, None] * halves[:, None, None, :])

    def __repr__(self) -> str:
        return f"DiscreteField(total_dofs={self.dofs.total_dofs}, n_free={self.dofs.n_free})"
