"""
wfleak 命令行入口

    python -m app.main <command> [options]

子命令：extract、analyze、leakage {joint,individual}、defend、bounds、validate。
参数优先级：命令行 > --config 配置文件 > 环境变量 > 默认值。
"""
import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

import app
from app.commands import RESERVED, analyze, bounds, defend, extract, leakage, validate
from app.config import get_settings, load_config_file
from app.errors import EXIT_DATA, EXIT_FAILURE, EXIT_OK, UsageError, WfleakError
from app.logger import configure_logging, get_logger
from app.schemas import PipelineConfig

logger = get_logger(__name__)

COMMANDS = (extract, analyze, leakage, defend, bounds, validate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfleak", description="网站指纹特征的信息泄露度量")
    parser.add_argument("--version", action="version", version=f"wfleak {app.__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    两遍解析：第一遍找到子命令和 --config，把配置文件的值设为该子命令的默认值后再解析

    Raises:
        UsageError: 配置文件中有子命令不认识的键
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args

    values = load_config_file(args.config)
    known = set(vars(args)) - set(RESERVED) - {"config"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown keys in {args.config} for '{args.command_name}': {', '.join(unknown)}")
    args.leaf_parser.set_defaults(**values)
    return parser.parse_args(argv)


def pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """命名空间中属于 PipelineConfig 的字段；线程数缺省取环境变量"""
    values = {key: value for key, value in vars(args).items()
              if key in PipelineConfig.model_fields and value is not None}
    values.setdefault("threads", get_settings().threads)
    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}")


def main(argv: Optional[List[str]] = None) -> int:
    """运行一条命令，返回退出码"""
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_OK
    except WfleakError as e:
        logger.error(f"参数错误: {e}")
        print(f"wfleak: {e}", file=sys.stderr)
        return e.exit_code

    if str(args.verbose).lower() in ("true", "1", "yes", "on"):
        configure_logging("DEBUG")
    stage = args.command_name
    try:
        config = pipeline_config(args)
        logger.info(f"开始 {stage}")
        args.handler(args, config)
    except WfleakError as e:
        logger.error(f"{stage} 失败: {e}")
        print(f"wfleak {stage}: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        logger.error(f"{stage} 读取的文件格式无效: {e}")
        print(f"wfleak {stage}: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.error(f"{stage} 阶段出现未预期的错误: {e}", exc_info=True)
        print(f"wfleak {stage}: unexpected error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    logger.info(f"{stage} 完成")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
