"""
テンソル積メッシュモジュール

軸平行な直方体領域のd-矩形分割（合同・非合同）と、
頂点ごと (値 + d個の勾配) の大域自由度番号付け、境界での固定を扱います。
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.polyq import Box, Scalar, to_fraction
from utils.logger import setup_logger

logger = setup_logger(__name__)

# 揺らぎ量を丸める2進分母
JITTER_DENOMINATOR = 2 ** 20


class MeshError(ValueError):
    """メッシュ定義の不正（退化領域・範囲外要素・ファイル形式不正）"""


@dataclass(frozen=True)
class BoxMesh:
    """
    テンソル積d-矩形メッシュ

    Attributes:
        breakpoints: 軸ごとの狭義単調増加な分点列（有理数）
    """
    breakpoints: Tuple[Tuple[Fraction, ...], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise MeshError("分点列が空です")
        normalized = []
        for axis, points in enumerate(self.breakpoints):
            values = tuple(to_fraction(p) for p in points)
            if len(values) < 2:
                raise MeshError(f"軸 {axis} の分点が2点未満です")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise MeshError(f"軸 {axis} の分点が狭義単調増加ではありません")
            normalized.append(values)
        object.__setattr__(self, "breakpoints", tuple(normalized))

    # ------------------------------------------------------------------
    # 規模
    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.breakpoints)

    @property
    def counts(self) -> Tuple[int, ...]:
        """各軸の要素数 N_k"""
        return tuple(len(p) - 1 for p in self.breakpoints)

    @property
    def vertex_shape(self) -> Tuple[int, ...]:
        return tuple(len(p) for p in self.breakpoints)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.counts))

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.vertex_shape))

    @property
    def n_interior_vertices(self) -> int:
        return int(np.prod([max(n - 2, 0) for n in self.vertex_shape]))

    @property
    def domain(self) -> Box:
        return Box.from_bounds(
            [p[0] for p in self.breakpoints],
            [p[-1] for p in self.breakpoints]
        )

    @cached_property
    def float_breakpoints(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.array([float(v) for v in p]) for p in self.breakpoints)

    # ------------------------------------------------------------------
    # 幾何
    # ------------------------------------------------------------------
    def element_indices(self) -> List[Tuple[int, ...]]:
        """要素の多重指数（第1軸が最も遅く変化する辞書式順）"""
        return list(itertools.product(*[range(n) for n in self.counts]))

    def element_geometry(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        全要素の (中心 (n_el, d), 半幅 (n_el, d))（浮動小数点、element_indices順）
        """
        centers_axis = [0.5 * (p[1:] + p[:-1]) for p in self.float_breakpoints]
        halves_axis = [0.5 * (p[1:] - p[:-1]) for p in self.float_breakpoints]
        c_grids = np.meshgrid(*centers_axis, indexing="ij")
        h_grids = np.meshgrid(*halves_axis, indexing="ij")
        centers = np.stack([g.ravel() for g in c_grids], axis=1)
        halves = np.stack([g.ravel() for g in h_grids], axis=1)
        return centers, halves

    @property
    def mesh_size(self) -> float:
        """h = 要素直径の最大値"""
        spacing = [float(max(b - a for a, b in zip(p, p[1:]))) for p in self.breakpoints]
        return float(np.sqrt(np.sum(np.square(spacing))))

    @property
    def shape_regularity(self) -> float:
        """要素ごとの (最大半幅 / 最小半幅) の最大値"""
        _, halves = self.element_geometry()
        return float(np.max(halves.max(axis=1) / halves.min(axis=1)))

    def _check_element(self, elem: Sequence[int]) -> Tuple[int, ...]:
        elem = tuple(int(e) for e in elem)
        if len(elem) != self.dim or any(not 0 <= e < n for e, n in zip(elem, self.counts)):
            raise MeshError(f"要素 {elem} は範囲外です（要素数 {self.counts}）")
        return elem

    def is_boundary_vertex(self, vertex: Sequence[int]) -> bool:
        return any(v == 0 or v == n - 1 for v, n in zip(vertex, self.vertex_shape))

    def vertex_coordinates(self, vertex: Sequence[int]) -> Tuple[Fraction, ...]:
        return tuple(self.breakpoints[k][v] for k, v in enumerate(vertex))


def _check_domain(domain: Sequence[Tuple[Scalar, Scalar]]) -> List[Tuple[Fraction, Fraction]]:
    bounds = [(to_fraction(lo), to_fraction(hi)) for lo, hi in domain]
    if not bounds:
        raise MeshError("領域の次元が0です")
    for axis, (lo, hi) in enumerate(bounds):
        if hi <= lo:
            raise MeshError(f"軸 {axis} の領域が退化しています: [{lo}, {hi}]")
    return bounds


def unit_domain(d: int) -> List[Tuple[Fraction, Fraction]]:
    """単位立方体 [0,1]^d"""
    return [(Fraction(0), Fraction(1))] * d


def uniform_mesh(domain: Sequence[Tuple[Scalar, Scalar]], counts: Sequence[int]) -> BoxMesh:
    """
    等間隔メッシュ

    Args:
        domain: 軸ごとの (下端, 上端)
        counts: 軸ごとの分割数 N_k（1以上）

    Returns:
        BoxMesh
    """
    bounds = _check_domain(domain)
    if len(counts) != len(bounds):
        raise MeshError(f"分割数 {tuple(counts)} と領域の次元 {len(bounds)} が一致しません")
    if any(int(n) < 1 for n in counts):
        raise MeshError(f"分割数はすべて1以上である必要があります: {tuple(counts)}")
    breakpoints = tuple(
        tuple(lo + (hi - lo) * Fraction(k, int(n)) for k in range(int(n) + 1))
        for (lo, hi), n in zip(bounds, counts)
    )
    return BoxMesh(breakpoints)


def graded_mesh(
    domain: Sequence[Tuple[Scalar, Scalar]],
    counts: Sequence[int],
    seed: int,
    jitter: float
) -> BoxMesh:
    """
    非合同メッシュ（内部分点を乱数で揺らしたテンソル積メッシュ）

    各内部分点を 最大 jitter × 局所間隔 だけずらす。ずらし量は2進有理数に切り捨て、
    同じ seed なら同じ分点列になる。

    Args:
        domain: 軸ごとの (下端, 上端)
        counts: 軸ごとの分割数
        seed: 乱数シード
        jitter: 揺らぎ率（0 ≤ jitter < 1/2）

    Returns:
        BoxMesh
    """
    if not 0 <= jitter < 0.5:
        raise MeshError(f"jitter は [0, 0.5) で指定してください: {jitter}")
    base = uniform_mesh(domain, counts)
    if jitter == 0:
        return base

    rng = np.random.default_rng(seed)
    breakpoints = []
    for points in base.breakpoints:
        n = len(points) - 1
        spacing = (points[-1] - points[0]) / n
        offsets = rng.uniform(-1.0, 1.0, size=max(n - 1, 0))
        moved = [points[0]]
        for k, u in enumerate(offsets, start=1):
            # 0方向への切り捨てで |ずらし量| ≤ jitter × 間隔 を保つ
            numerator = int(jitter * u * JITTER_DENOMINATOR)
            moved.append(points[k] + spacing * Fraction(numerator, JITTER_DENOMINATOR))
        moved.append(points[-1])
        breakpoints.append(tuple(moved))
    return BoxMesh(tuple(breakpoints))


def element_box(mesh: BoxMesh, elem: Sequence[int]) -> Box:
    """
    要素の直方体（中心・半幅、有理数）

    Raises:
        MeshError: 範囲外の要素
    """
    elem = mesh._check_element(elem)
    lower = [mesh.breakpoints[k][e] for k, e in enumerate(elem)]
    upper = [mesh.breakpoints[k][e + 1] for k, e in enumerate(elem)]
    return Box.from_bounds(lower, upper)


def _vertex_offsets(d: int) -> np.ndarray:
    """局所頂点（辞書式 ξ ∈ {-1,+1}^d）の格子オフセット {0,1}^d"""
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=int)


@dataclass(frozen=True)
class DofMap:
    """
    大域自由度の番号付け

    頂点 v（C順の平坦番号）の自由度は v*(d+1) + k、k=0 が値、k=1..d が勾配。
    境界頂点の d+1 個の自由度はすべて0に固定する。

    Attributes:
        mesh: メッシュ
        total_dofs: 全自由度数 (d+1)・頂点数
        free: 非固定自由度の大域番号（昇順）
        free_index: 大域番号 → 非固定番号（固定は -1）
        element_dofs: 要素ごとの局所順の大域番号 (n_el, 2^d (d+1))
    """
    mesh: BoxMesh
    total_dofs: int
    free: np.ndarray
    free_index: np.ndarray
    element_dofs: np.ndarray

    @property
    def n_free(self) -> int:
        return int(self.free.size)

    @property
    def element_free_dofs(self) -> np.ndarray:
        """要素ごとの非固定番号（固定は -1）"""
        return self.free_index[self.element_dofs]


def element_dof_table(mesh: BoxMesh) -> np.ndarray:
    """全要素の局所順大域自由度番号 (n_el, 2^d (d+1))"""
    d = mesh.dim
    elems = np.array(mesh.element_indices(), dtype=int).reshape(mesh.n_elements, d)
    offsets = _vertex_offsets(d)
    vertex_multi = elems[:, None, :] + offsets[None, :, :]
    vertex_ids = np.ravel_multi_index(
        tuple(vertex_multi[..., k] for k in range(d)), mesh.vertex_shape
    )
    dofs = vertex_ids[:, :, None] * (d + 1) + np.arange(d + 1)[None, None, :]
    return dofs.reshape(mesh.n_elements, -1)


def build_dof_map(mesh: BoxMesh) -> DofMap:
    """
    メッシュから自由度の番号付けを作る

    Args:
        mesh: メッシュ

    Returns:
        DofMap
    """
    d = mesh.dim
    grids = np.meshgrid(*[np.arange(n) for n in mesh.vertex_shape], indexing="ij")
    boundary = np.zeros(mesh.vertex_shape, dtype=bool)
    for k, g in enumerate(grids):
        boundary |= (g == 0) | (g == mesh.vertex_shape[k] - 1)
    constrained_vertex = boundary.ravel()
    constrained = np.repeat(constrained_vertex, d + 1)
    free = np.flatnonzero(~constrained)
    free_index = -np.ones(constrained.size, dtype=int)
    free_index[free] = np.arange(free.size)

    dof_map = DofMap(
        mesh=mesh,
        total_dofs=int(constrained.size),
        free=free,
        free_index=free_index,
        element_dofs=element_dof_table(mesh)
    )
    logger.debug(
        f"自由度: 全 {dof_map.total_dofs}, 非固定 {dof_map.n_free}, 要素 {mesh.n_elements}"
    )
    return dof_map


def global_dofs(mesh: BoxMesh, elem: Sequence[int]) -> List[int]:
    """
    1要素の局所順大域自由度番号

    Raises:
        MeshError: 範囲外の要素
    """
    elem = mesh._check_element(elem)
    d = mesh.dim
    result = []
    for offset in _vertex_offsets(d):
        vertex = tuple(int(e + o) for e, o in zip(elem, offset))
        vid = int(np.ravel_multi_index(vertex, mesh.vertex_shape))
        result.extend(vid * (d + 1) + k for k in range(d + 1))
    return result


# ----------------------------------------------------------------------
# テキスト形式
# ----------------------------------------------------------------------
def format_mesh(mesh: BoxMesh) -> str:
    """1行目 `dim d`、以降は軸ごとに分点を空白区切り（有理数は p/q 表記）"""
    lines = [f"dim {mesh.dim}"]
    for points in mesh.breakpoints:
        lines.append(" ".join(str(p) for p in points))
    return "\n".join(lines) + "\n"


def write_mesh_file(mesh: BoxMesh, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(format_mesh(mesh), encoding="utf-8")
    logger.info(f"メッシュを保存しました: {target}")


def parse_mesh(text: str) -> BoxMesh:
    """
    テキスト形式のメッシュを読み込む

    Raises:
        MeshError: 形式不正
    """
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if not lines:
        raise MeshError("メッシュ記述が空です")
    header = lines[0].split()
    if len(header) != 2 or header[0] != "dim":
        raise MeshError(f"1行目は 'dim d' である必要があります: {lines[0]!r}")
    try:
        d = int(header[1])
    except ValueError:
        raise MeshError(f"次元が整数ではありません: {header[1]!r}")
    if len(lines) - 1 != d:
        raise MeshError(f"分点の行数 {len(lines) - 1} が次元 {d} と一致しません")
    breakpoints = []
    for axis, line in enumerate(lines[1:]):
        try:
            breakpoints.append(tuple(Fraction(token) for token in line.split()))
        except (ValueError, ZeroDivisionError):
            raise MeshError(f"軸 {axis} の分点を数値として読めません: {line!r}")
    return BoxMesh(tuple(breakpoints))


def read_mesh_file(path: Union[str, Path]) -> BoxMesh:
    source = Path(path)
    if not source.exists():
        raise MeshError(f"メッシュファイルが見つかりません: {path}")
    return parse_mesh(source.read_text(encoding="utf-8"))
