"""
leakage 子命令

  joint       分组后全部特征的联合泄露（可附带各类别泄露与 top-n 曲线）
  individual  每个特征的单独泄露
"""
import argparse
from typing import List

from app.commands import (
    add_analysis_options,
    add_command,
    add_grouping_option,
    add_input_options,
    add_world_options,
    int_list,
    snapshot,
)
from app.errors import DataError
from app.logger import get_logger
from app.schemas import PipelineConfig
from app.services.analyzer import leakage_summary, rank_features
from app.services.artifacts import rows_from, write_csv, write_json, write_manifest
from app.services.pipeline import (
    curve_rows,
    feature_templates,
    grouping_for,
    load_table,
    mc_config,
    measure_joint,
    open_cache,
    output_dir,
    resolve_world,
)

logger = get_logger(__name__)

RANKING_COLUMNS = ("index", "name", "bits", "stderr", "failed")
CATEGORY_COLUMNS = ("category", "name", "n_features", "bits", "stderr")


def run_joint(args: argparse.Namespace, config: PipelineConfig) -> None:
    cache = open_cache(config)
    table = load_table(config, cache)
    world = resolve_world(config, table.websites)
    out = output_dir(config, "leakage")

    grouping = grouping_for(table, world, config, cache)
    result = measure_joint(table, grouping, world, config)
    write_json(result, out / "leakage.json")
    if result.per_category:
        write_csv(rows_from(result.per_category), out / "per_category.csv", CATEGORY_COLUMNS)
    if args.curve:
        write_csv(curve_rows(table, grouping, args.curve, world, config), out / "top_n_curve.csv",
                  ("n", "bits", "stderr"))

    write_manifest(out, args.command_name, snapshot(args, config), config.seed)
    logger.info(f"联合泄露 {result.bits:.4f} ± {result.stderr:.4f} bits，结果写入 {out}")


def _feature_indices(names: List[str], wanted: List[str]) -> List[int]:
    index = {name: j for j, name in enumerate(names)}
    unknown = [w for w in wanted if w not in index]
    if unknown:
        raise DataError(f"unknown features: {', '.join(unknown[:5])}")
    return [index[w] for w in wanted]


def run_individual(args: argparse.Namespace, config: PipelineConfig) -> None:
    table = load_table(config, open_cache(config))
    world = resolve_world(config, table.websites)
    out = output_dir(config, "leakage")

    features = None
    if args.feature:
        features = _feature_indices(list(table.feature_names), [f for f in args.feature.split(",") if f])
    ranking = rank_features(table, world, mc_config(config), config.beta, features,
                            config.threads, config.progress, feature_templates(table, config))
    write_csv(rows_from(ranking.entries), out / "individual.csv", RANKING_COLUMNS)
    write_json(leakage_summary(ranking), out / "leakage_summary.json")

    write_manifest(out, args.command_name, snapshot(args, config), config.seed)
    failed = sum(1 for e in ranking.entries if e.failed)
    logger.info(f"单特征泄露已写入 {out}: {len(ranking)} 个特征, 失败 {failed} 个")


def register(subparsers) -> None:
    parser = subparsers.add_parser("leakage", help="信息泄露估计", description="信息泄露估计")
    leakage_subparsers = parser.add_subparsers(dest="leakage_command", metavar="MODE")
    leakage_subparsers.required = True

    joint = add_command(leakage_subparsers, "joint", run_joint, "分组后全部特征的联合泄露",
                        command_name="leakage joint")
    add_input_options(joint)
    add_world_options(joint)
    add_grouping_option(joint)
    add_analysis_options(joint)
    joint.add_argument("--per-category", action="store_true", default=None, help="同时估计各类别的泄露")
    joint.add_argument("--curve", type=int_list, default=None, help="top-n 曲线的 n 值，如 10,20,50")

    individual = add_command(leakage_subparsers, "individual", run_individual, "每个特征的单独泄露",
                             command_name="leakage individual")
    add_input_options(individual)
    add_world_options(individual)
    individual.add_argument("--feature", default=None, help="只估计这些特征（逗号分隔的列名）")
