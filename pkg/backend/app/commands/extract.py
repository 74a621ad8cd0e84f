"""extract 子命令：trace 数据集 → 3043 维特征 CSV"""
import argparse

from app.commands import add_command, add_input_options, snapshot
from app.errors import UsageError
from app.extractors.feature_extractor import write_feature_csv, write_layout_json
from app.logger import get_logger
from app.schemas import PipelineConfig
from app.services.artifacts import write_manifest
from app.services.pipeline import extract_table, open_cache, output_dir

logger = get_logger(__name__)

FEATURES_FILE = "features.csv"
LAYOUT_FILE = "layout.json"


def run(args: argparse.Namespace, config: PipelineConfig) -> None:
    if not config.dataset:
        raise UsageError("extract requires --dataset")
    out = output_dir(config, "extract")
    table = extract_table(config.dataset, config.cell_size, config.threads, open_cache(config), config.progress)
    write_feature_csv(table, out / FEATURES_FILE)
    write_layout_json(out / LAYOUT_FILE)
    write_manifest(out, args.command_name, snapshot(args, config), None)
    logger.info(f"特征已写入 {out / FEATURES_FILE}: {table.n_rows} 行, {len(table.websites)} 个网站")


def register(subparsers) -> None:
    parser = add_command(subparsers, "extract", run, "提取每条 trace 的 3043 个特征")
    add_input_options(parser)
