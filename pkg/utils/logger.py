"""
ログ設定モジュール
"""
import logging
import os
import sys
from pathlib import Path
from typing import Optional


# CSVを標準出力へ流すため、コンソール出力は標準エラーに寄せる
_DEFAULT_LEVEL = "INFO"
_root_level = _DEFAULT_LEVEL
_root_log_file: Optional[str] = None
# 共通ログファイルのハンドラー（全ロガーで1つを共有）
_shared_file_handler: Optional[logging.FileHandler] = None

_FORMATTER = logging.Formatter(
    '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)


def _open_file_handler(log_file: str) -> logging.FileHandler:
    log_path = Path(log_file)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setFormatter(_FORMATTER)
    return handler


def _shared_handler(log_file: str) -> logging.FileHandler:
    """共通ログファイルのハンドラー（同じパスなら同じオブジェクト）"""
    global _shared_file_handler
    if _shared_file_handler is None or _shared_file_handler.baseFilename != os.path.abspath(log_file):
        if _shared_file_handler is not None:
            _shared_file_handler.close()
        _shared_file_handler = _open_file_handler(log_file)
    return _shared_file_handler


def setup_logger(name: str = "adini_fem", level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    ロガーをセットアップする

    Args:
        name: ロガー名
        level: ログレベル（DEBUG, INFO, WARNING, ERROR）。Noneの場合は共通設定
        log_file: ログファイルパス（Noneの場合は共通設定、共通設定もなければコンソールのみ）

    Returns:
        設定済みのロガー
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, (level or _root_level).upper()))
    logger.propagate = False

    # 既存のハンドラーをクリア（共有ハンドラーは閉じない）
    for handler in list(logger.handlers):
        if handler is not _shared_file_handler:
            handler.close()
    logger.handlers.clear()

    # コンソールハンドラー
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(_FORMATTER)
    logger.addHandler(console_handler)

    # ファイルハンドラー（個別指定はロガー専用、共通設定は共有）
    if log_file:
        logger.addHandler(_open_file_handler(log_file))
    elif _root_log_file:
        logger.addHandler(_shared_handler(_root_log_file))

    return logger


def configure_logging(level: str = _DEFAULT_LEVEL, log_file: Optional[str] = None) -> None:
    """
    生成済みのプロジェクト内ロガーへ共通のレベル・出力先を反映する

    CLI起動時に一度だけ呼ばれる想定。ログファイルは全ロガーで1つのハンドラーを共有する。

    Args:
        level: ログレベル
        log_file: ログファイルパス
    """
    global _root_level, _root_log_file, _shared_file_handler
    if not hasattr(logging, level.upper()):
        raise ValueError(f"不明なログレベルです: {level}")
    _root_level = level.upper()
    _root_log_file = log_file

    previous = _shared_file_handler
    if log_file is None:
        _shared_file_handler = None

    for name in list(logging.root.manager.loggerDict):
        if name == "adini_fem" or name.startswith(("src.", "utils.")):
            setup_logger(name)

    if previous is not None and previous is not _shared_file_handler:
        previous.close()


# デフォルトロガー
logger = setup_logger()
