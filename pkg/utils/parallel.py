"""
並列実行ユーティリティモジュール

ワーカー数の決定（CLI引数 > 環境変数 ADINI_THREADS > 既定値）と、
スレッドプールによる順序保存マップを提供します。
"""
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Mapping, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VAR = "ADINI_THREADS"


def resolve_workers(
    requested: Optional[int] = None,
    environ: Optional[Mapping[str, str]] = None
) -> int:
    """
    使用するワーカー数を決定する

    Args:
        requested: 明示指定されたワーカー数（Noneなら環境変数を参照）
        environ: 環境変数マッピング（Noneならos.environ）

    Returns:
        1以上のワーカー数
    """
    if requested is not None:
        if int(requested) < 1:
            raise ValueError(f"ワーカー数は1以上を指定してください: {requested}")
        return int(requested)

    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV_VAR)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} が整数ではありません: {raw!r}")
        if value < 1:
            raise ValueError(f"{THREADS_ENV_VAR} は1以上を指定してください: {value}")
        return value

    return min(8, os.cpu_count() or 1)


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    入力順を保ったまま func を適用する

    Args:
        func: 各要素に適用する関数（スレッド安全であること）
        items: 入力
        workers: ワーカー数（1なら逐次実行）

    Returns:
        結果のリスト（入力と同じ順序）
    """
    materialized = list(items)
    if workers <= 1 or len(materialized) <= 1:
        return [func(item) for item in materialized]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, materialized))
