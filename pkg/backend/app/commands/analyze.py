"""analyze 子命令：单特征泄露排名、冗余剪枝与特征聚类"""
import argparse

from app.commands import add_analysis_options, add_command, add_input_options, add_world_options, snapshot
from app.logger import get_logger
from app.schemas import PipelineConfig
from app.services.analyzer import leakage_summary
from app.services.artifacts import rows_from, write_csv, write_json, write_manifest
from app.services.infotheory import LazyNmi, write_nmi_csv
from app.services.pipeline import analyze_table, load_table, open_cache, output_dir, resolve_world

logger = get_logger(__name__)

RANKING_COLUMNS = ("index", "name", "bits", "stderr", "failed")


def run(args: argparse.Namespace, config: PipelineConfig) -> None:
    cache = open_cache(config)
    table = load_table(config, cache)
    world = resolve_world(config, table.websites)
    out = output_dir(config, "analyze")

    grouping, ranking, report = analyze_table(table, world, config, cache)
    write_json(report, out / "grouping.json")
    write_csv(rows_from(report.ranking), out / "ranking.csv", RANKING_COLUMNS)
    write_json(leakage_summary(ranking), out / "leakage_summary.json")

    matrix = LazyNmi(table.values, table.feature_names).submatrix(grouping.kept_features, config.threads)
    write_nmi_csv(matrix, out / "nmi.csv")

    write_manifest(out, args.command_name, snapshot(args, config), config.seed)
    logger.info(f"分组结果已写入 {out}: {len(grouping.kept_features)} 个特征, {len(grouping.clusters)} 个簇")


def register(subparsers) -> None:
    parser = add_command(subparsers, "analyze", run, "特征排名、冗余剪枝与 DBSCAN 聚类")
    add_input_options(parser)
    add_world_options(parser)
    add_analysis_options(parser)
