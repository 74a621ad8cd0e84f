"""
命令行子命令

每个模块提供 register(subparsers)，在入口处注册；处理函数签名为
handler(args, config)。参数默认值一律为 None，便于区分“未给出”与配置文件中的值。
"""
import argparse
from typing import Any, Callable, Dict, List

from app.errors import UsageError
from app.schemas import PipelineConfig, PriorKind, WorldMode

# 不进入配置快照的命名空间字段
RESERVED = ("handler", "leaf_parser", "command", "command_name", "leakage_command")


def int_list(text: str) -> List[int]:
    """逗号分隔的整数列表"""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def common_parser() -> argparse.ArgumentParser:
    """所有子命令共有的参数"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", default=None, help="key = value 配置文件，被命令行参数覆盖")
    parser.add_argument("--threads", type=int, default=None, help="工作线程数上限（默认 WFLEAK_THREADS）")
    parser.add_argument("--seed", type=int, default=None, help="随机种子，随机阶段必填")
    parser.add_argument("--output", default=None, help="输出目录")
    parser.add_argument("--verbose", action="store_true", default=None, help="控制台输出 DEBUG 日志")
    parser.add_argument("--progress", action="store_true", default=None, help="显示进度条")
    parser.add_argument("--no-cache", action="store_true", default=None, help="不读写阶段缓存")
    return parser


def add_input_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", default=None, help="trace 数据集目录 <root>/<website>/<visit>.trace")
    parser.add_argument("--features", default=None, help="extract 写出的特征 CSV（优先于 --dataset）")
    parser.add_argument("--cell-size", type=int, default=None, help="cell 大小（字节），默认 512")


def add_world_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--world", choices=[m.value for m in WorldMode], default=None)
    parser.add_argument("--monitored", default=None, help="monitored 网站列表文件，每行一个")
    parser.add_argument("--prior", choices=[p.value for p in PriorKind], default=None)
    parser.add_argument("--prior-file", default=None, help="<website> <weight> 每行一条的先验文件")
    parser.add_argument("--per-site", action="store_true", default=None,
                        help="open world 中每个 non-monitored 网站单独建模")
    parser.add_argument("--beta", type=int, default=None, help="离散值出现次数阈值，默认 10")
    parser.add_argument("--mc-samples", type=int, default=None, help="蒙特卡洛样本数，默认 5000")
    parser.add_argument("--template-tau", type=float, default=None,
                        help="BuFLO 防御后的数据集：τ 时长模式的特征取值总是判为离散")
    parser.add_argument("--template-rho", type=float, default=None,
                        help="模式的发送间隔（秒），默认 WFLEAK_BUFLO_RHO")


def add_grouping_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grouping", default=None, help="analyze 写出的 grouping.json；缺省时现场分析")


def add_analysis_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--top-n", type=int, default=None, help="保留的特征数，默认 100")
    parser.add_argument("--prune-threshold", type=float, default=None, help="冗余剪枝的 NMI 阈值，默认 0.9")
    parser.add_argument("--eps", type=float, default=None, help="DBSCAN 半径，默认 0.4")
    parser.add_argument("--rank-samples", type=int, default=None,
                        help="单特征排名的蒙特卡洛样本数，默认同 --mc-samples")


def add_command(subparsers, name: str, handler: Callable, help_text: str,
                command_name: str = None) -> argparse.ArgumentParser:
    """注册一个叶子子命令，并把解析器本身存进命名空间供配置文件合并使用"""
    parser = subparsers.add_parser(name, parents=[common_parser()], help=help_text, description=help_text)
    parser.set_defaults(handler=handler, leaf_parser=parser, command_name=command_name or name)
    return parser


def snapshot(args: argparse.Namespace, config: PipelineConfig) -> Dict[str, Any]:
    """合并后的配置快照：PipelineConfig 字段加上子命令自己的参数"""
    values: Dict[str, Any] = config.model_dump()
    for key, value in vars(args).items():
        if key in RESERVED or key in values:
            continue
        values[key] = ",".join(str(v) for v in value) if isinstance(value, list) else value
    values.pop("verbose", None)
    values.pop("progress", None)
    return values


def require(value: Any, flag: str) -> Any:
    if value is None or value == []:
        raise UsageError(f"{flag} is required")
    return value
