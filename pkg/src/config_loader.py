"""
設定読み込みモジュール

config/settings.yaml の既定値に、環境変数と CLI 引数を重ねて
1回の実行設定 RunConfig を組み立て、検証します。
優先順位: 組み込み既定値 < YAML < 環境変数 < CLI 引数
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from src.analysis import INTERPOLATION_NORMS, NORMS
from src.quadrature import MAX_POINTS
from utils.logger import setup_logger
from utils.parallel import resolve_workers

logger = setup_logger(__name__)

DEFAULT_SETTINGS_PATH = Path(__file__).resolve().parent.parent / "config" / "settings.yaml"
MAX_JITTER = 0.45
SUPPORTED_DIMS = (1, 2, 3)
SOLVERS = ("cg", "dense")
COMMANDS = ("solve", "convergence", "verify", "mesh")

DEFAULT_SETTINGS: Dict[str, Any] = {
    "quadrature": {"assembly": 4, "error": 6},
    "solver": {"method": "cg", "tol": 1e-10, "maxit_factor": 50},
    "mesh": {"jitter": 0.0, "seed": 0},
    "verify": {"trials": 20, "boxes": 5, "seed": 1},
    "lower_bound": {"max_ratio": 4.0},
    "logging": {"level": "INFO", "file": None},
    "threads": None,
}


class ConfigError(ValueError):
    """設定値の不正"""


@dataclass(frozen=True)
class OrderBand:
    """`--assert-orders` の1項目（ノルム名と次数の範囲）"""
    norm: str
    low: float
    high: float

    @classmethod
    def parse(cls, text: str) -> "OrderBand":
        """`h2:1.8:2.2` 形式"""
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"次数範囲は 'norm:low:high' 形式で指定してください: {text!r}")
        norm = parts[0].strip()
        if norm not in NORMS + INTERPOLATION_NORMS:
            raise ConfigError(f"未知のノルムです: {norm!r}（利用可能: {', '.join(NORMS + INTERPOLATION_NORMS)}）")
        try:
            low, high = float(parts[1]), float(parts[2])
        except ValueError:
            raise ConfigError(f"次数範囲が数値ではありません: {text!r}")
        if low > high:
            raise ConfigError(f"次数範囲の下限が上限を超えています: {text!r}")
        return cls(norm, low, high)


@dataclass(frozen=True)
class RunConfig:
    """
    1回の実行設定（不変）

    Attributes:
        command: solve / convergence / verify / mesh
        d: 次元
        Ns: 分割数の列（solve では先頭のみ使用）
        solution: 組み込み解の名前（u1 / u2）
        solution_file: 多項式解ファイル（指定時は solution より優先）
        mesh_file: メッシュファイル（指定時は d, Ns, jitter を無視）
        jitter, seed: 非合同メッシュの揺らぎ率とシード
        quad_assembly, quad_error: 1軸あたりのGauss点数
        solver: cg / dense
        tol: 相対残差の許容値
        maxit: 最大反復回数（Noneなら maxit_factor・√n）
        maxit_factor: 既定最大反復回数の係数
        out: 出力先（Noneなら標準出力）
        dump_matrix: 剛性行列の書き出し先
        interpolant: 補間誤差列を追加するか
        assert_orders: 検査する次数範囲
        no_timing: seconds 列を0にするか
        trials, boxes, verify_seed: 構造補題の検証パラメータ
        identity19, leading_term, lower_bound: verify の追加検証
        max_ratio: 下界検定の閾値
        threads: ワーカー数
        log_level, log_file: ログ設定
    """
    command: str
    d: int = 2
    Ns: Tuple[int, ...] = (4,)
    solution: str = "u2"
    solution_file: Optional[str] = None
    mesh_file: Optional[str] = None
    jitter: float = 0.0
    seed: int = 0
    quad_assembly: int = 4
    quad_error: int = 6
    solver: str = "cg"
    tol: float = 1e-10
    maxit: Optional[int] = None
    maxit_factor: float = 50
    out: Optional[str] = None
    dump_matrix: Optional[str] = None
    interpolant: bool = False
    assert_orders: Tuple[OrderBand, ...] = ()
    no_timing: bool = False
    trials: int = 20
    boxes: int = 5
    verify_seed: int = 1
    identity19: bool = False
    leading_term: bool = False
    lower_bound: bool = False
    max_ratio: float = 4.0
    threads: int = 1
    log_level: str = "INFO"
    log_file: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.Ns[0]


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path: Union[str, Path, None] = None) -> Dict[str, Any]:
    """
    設定ファイルを読み込み、組み込み既定値に重ねる

    Args:
        path: settings.yaml のパス（Noneなら config/settings.yaml）

    Returns:
        設定辞書

    Raises:
        ConfigError: ファイルがない・YAMLとして読めない場合
    """
    source = Path(path) if path is not None else DEFAULT_SETTINGS_PATH
    if not source.exists():
        if path is None:
            logger.warning(f"設定ファイルがないため既定値を使用します: {source}")
            return copy.deepcopy(DEFAULT_SETTINGS)
        raise ConfigError(f"設定ファイルが見つかりません: {source}")

    try:
        with open(source, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"設定ファイルを解析できません: {source}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"設定ファイルの最上位はマッピングである必要があります: {source}")
    return _deep_merge(DEFAULT_SETTINGS, data)


def parse_int_list(text: Union[str, int, Tuple[int, ...], None]) -> Tuple[int, ...]:
    """`4,8,16` を (4, 8, 16) にする"""
    if text is None:
        return ()
    if isinstance(text, int):
        return (text,)
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"整数のカンマ区切りリストではありません: {text!r}")


def _arg(args: Any, name: str, default: Any = None) -> Any:
    if isinstance(args, Mapping):
        value = args.get(name, default)
    else:
        value = getattr(args, name, default)
    return default if value is None else value


def build_run_config(
    args: Any,
    settings: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None
) -> RunConfig:
    """
    CLI 引数・設定・環境変数から RunConfig を組み立てて検証する

    Args:
        args: argparse.Namespace または辞書
        settings: load_settings の結果（Noneなら組み込み既定値）
        environ: 環境変数（Noneなら os.environ）

    Returns:
        RunConfig

    Raises:
        ConfigError: 値が不正な場合
    """
    settings = _deep_merge(DEFAULT_SETTINGS, settings or {})
    command = _arg(args, "command")
    if command not in COMMANDS:
        raise ConfigError(f"未知のコマンドです: {command!r}")

    Ns = parse_int_list(_arg(args, "Ns")) or parse_int_list(_arg(args, "N")) or (4,)

    try:
        threads = resolve_workers(_arg(args, "threads", settings.get("threads")), environ)
    except ValueError as exc:
        raise ConfigError(str(exc))

    try:
        assert_orders = tuple(OrderBand.parse(t) for t in (_arg(args, "assert_orders") or []))
        config = RunConfig(
            command=command,
            d=int(_arg(args, "d", 2)),
            Ns=Ns,
            solution=str(_arg(args, "u", "u2")),
            solution_file=_arg(args, "solution_file"),
            mesh_file=_arg(args, "mesh_file"),
            jitter=float(_arg(args, "jitter", settings["mesh"]["jitter"])),
            seed=int(_arg(args, "seed", settings["mesh"]["seed"])),
            quad_assembly=int(_arg(args, "quad_assembly", settings["quadrature"]["assembly"])),
            quad_error=int(_arg(args, "quad_error", settings["quadrature"]["error"])),
            solver=str(_arg(args, "solver", settings["solver"]["method"])),
            tol=float(_arg(args, "tol", settings["solver"]["tol"])),
            maxit=_arg(args, "maxit"),
            maxit_factor=float(settings["solver"]["maxit_factor"]),
            out=_arg(args, "out"),
            dump_matrix=_arg(args, "dump_matrix"),
            interpolant=bool(_arg(args, "interpolant", False)),
            assert_orders=assert_orders,
            no_timing=bool(_arg(args, "no_timing", False)),
            trials=int(_arg(args, "trials", settings["verify"]["trials"])),
            boxes=int(_arg(args, "boxes", settings["verify"]["boxes"])),
            verify_seed=int(_arg(args, "verify_seed", settings["verify"]["seed"])),
            identity19=bool(_arg(args, "identity19", False)),
            leading_term=bool(_arg(args, "leading_term", False)),
            lower_bound=bool(_arg(args, "lower_bound", False)),
            max_ratio=float(_arg(args, "max_ratio", settings["lower_bound"]["max_ratio"])),
            threads=threads,
            log_level=str(_arg(args, "log_level", settings["logging"]["level"])).upper(),
            log_file=_arg(args, "log_file", settings["logging"].get("file")),
            settings=settings
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"設定値を解釈できません: {exc}")

    validate_run_config(config)
    return config


def validate_run_config(config: RunConfig) -> None:
    """
    RunConfig の値域を検証する

    Raises:
        ConfigError: 最初に見つかった不正値
    """
    errors = []
    if config.d not in SUPPORTED_DIMS:
        errors.append(f"d は {SUPPORTED_DIMS} のいずれかで指定してください: {config.d}")

    if config.command == "solve" or config.command == "mesh":
        if any(n < 1 for n in config.Ns):
            errors.append(f"N は1以上で指定してください: {config.Ns}")
    else:
        if any(n < 2 for n in config.Ns):
            errors.append(f"収束検証では各水準の N を2以上で指定してください: {config.Ns}")
    if config.command == "convergence":
        if config.mesh_file is not None:
            errors.append("convergence では --mesh-file を使えません（水準は --Ns で指定）")
        elif len(config.Ns) < 2:
            errors.append(f"convergence には2水準以上の N が必要です: {config.Ns}")
    if config.command == "verify" and config.lower_bound and len(config.Ns) < 2:
        errors.append(f"下界検定には2水準以上の N が必要です: {config.Ns}")
    if config.command == "mesh" and not config.out:
        errors.append("mesh コマンドには --out が必要です")

    if not 0 <= config.jitter <= MAX_JITTER:
        errors.append(f"jitter は [0, {MAX_JITTER}] で指定してください: {config.jitter}")
    for name in ("quad_assembly", "quad_error"):
        n = getattr(config, name)
        if not 1 <= n <= MAX_POINTS:
            errors.append(f"{name} は1以上{MAX_POINTS}以下で指定してください: {n}")
    if config.solver not in SOLVERS:
        errors.append(f"solver は {SOLVERS} のいずれかで指定してください: {config.solver}")
    if not config.tol > 0:
        errors.append(f"tol は正である必要があります: {config.tol}")
    if config.maxit is not None and int(config.maxit) < 1:
        errors.append(f"maxit は1以上で指定してください: {config.maxit}")
    if config.trials < 1 or config.boxes < 1:
        errors.append(f"trials と boxes は1以上で指定してください: {config.trials}, {config.boxes}")
    if not config.max_ratio >= 1:
        errors.append(f"max_ratio は1以上で指定してください: {config.max_ratio}")
    if config.solution_file is None and config.solution not in ("u1", "u2"):
        errors.append(f"u は u1 / u2 のいずれか（または --solution-file）で指定してください: {config.solution}")
    if config.solution_file is not None and not Path(config.solution_file).exists():
        errors.append(f"解ファイルが見つかりません: {config.solution_file}")
    if config.mesh_file is not None and not Path(config.mesh_file).exists():
        errors.append(f"メッシュファイルが見つかりません: {config.mesh_file}")
    if config.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"不明なログレベルです: {config.log_level}")

    if errors:
        message = "; ".join(errors)
        logger.error(f"設定エラー: {message}")
        raise ConfigError(message)
