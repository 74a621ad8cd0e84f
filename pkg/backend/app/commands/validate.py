"""validate 子命令：bootstrap / 子采样置信区间"""
import argparse

from pydantic import ValidationError

from app.commands import (
    add_analysis_options,
    add_command,
    add_grouping_option,
    add_input_options,
    add_world_options,
    snapshot,
)
from app.errors import UsageError
from app.logger import get_logger
from app.schemas import PipelineConfig, ResampleConfig, ResampleMode
from app.services.artifacts import write_csv, write_json, write_manifest
from app.services.pipeline import grouping_for, load_table, open_cache, output_dir, resolve_world, validate_joint

logger = get_logger(__name__)


def resample_config(args: argparse.Namespace, config: PipelineConfig) -> ResampleConfig:
    values = {"seed": config.require_seed()}
    if args.mode is not None:
        values["mode"] = args.mode
    if args.trials is not None:
        values["trials"] = args.trials
    if args.ci is not None:
        values["ci_level"] = args.ci
    if args.world_size is not None:
        values["subset_size"] = args.world_size
    try:
        return ResampleConfig(**values)
    except ValidationError as e:
        raise UsageError(f"invalid resampling options: {e}")


def run(args: argparse.Namespace, config: PipelineConfig) -> None:
    resample = resample_config(args, config)
    if resample.mode == ResampleMode.BOOTSTRAP and resample.subset_size is not None:
        raise UsageError("--world-size only applies to --mode subsample")
    cache = open_cache(config)
    table = load_table(config, cache)
    world = resolve_world(config, table.websites)
    out = output_dir(config, "validate")

    grouping = grouping_for(table, world, config, cache)
    interval = validate_joint(table, grouping, config, resample, resample.subset_size)

    rows = [{"trial": i, "bits": "" if v is None else v, "failed": v is None}
            for i, v in enumerate(interval.trial_values)]
    write_csv(rows, out / "trials.csv", ("trial", "bits", "failed"))
    write_json({
        "mode": resample.mode.value,
        "trials": resample.trials,
        "ci_level": resample.ci_level,
        "seed": resample.seed,
        "world_size": resample.subset_size,
        "low": interval.low,
        "high": interval.high,
        "point": interval.point,
        "successful_trials": len(interval.successful),
        "failed_trials": interval.failed_trials,
    }, out / "ci.json")
    write_manifest(out, args.command_name, snapshot(args, config), config.seed)
    logger.info(f"置信区间 [{interval.low:.4f}, {interval.high:.4f}] 已写入 {out}")


def register(subparsers) -> None:
    parser = add_command(subparsers, "validate", run, "联合泄露的 bootstrap / 子采样置信区间")
    add_input_options(parser)
    add_world_options(parser)
    add_grouping_option(parser)
    add_analysis_options(parser)
    parser.add_argument("--mode", choices=[m.value for m in ResampleMode], default=None)
    parser.add_argument("--trials", type=int, default=None, help="重复次数 K，默认 20")
    parser.add_argument("--ci", type=float, default=None, help="置信水平，默认 0.9")
    parser.add_argument("--world-size", type=int, default=None, help="子采样时每次抽取的网站数")
