"""defend 子命令：对数据集模拟 BuFLO / Tamaraw，写出防御后的镜像数据集与开销报告"""
import argparse
from typing import List, Tuple, Union

from pydantic import ValidationError

from app.commands import add_command, float_list, int_list, require, snapshot
from app.config import get_settings
from app.errors import UsageError
from app.logger import get_logger
from app.schemas import BufloParams, DefenseKind, PipelineConfig, TamarawParams
from app.services.artifacts import rows_from, write_csv, write_manifest
from app.services.defenses import defend_dataset, overhead_summary
from app.services.pipeline import output_dir
from app.traces import DEFAULT_CELL_SIZE, load_dataset, write_dataset

logger = get_logger(__name__)

OVERHEAD_COLUMNS = ("website_id", "visit_id", "real_cells", "defended_cells",
                    "bandwidth_overhead", "latency_overhead")


def _number_label(value: Union[int, float]) -> str:
    return f"{value:g}"


def sweep_params(args: argparse.Namespace) -> List[Tuple[str, Union[BufloParams, TamarawParams]]]:
    """(目录名, 参数) 列表；τ 或 L 可以给多个值"""
    settings = get_settings()
    kind = DefenseKind(args.defense)
    try:
        if kind == DefenseKind.BUFLO:
            rho = args.rho if args.rho is not None else settings.buflo_rho
            cell_size = args.cell_size if args.cell_size is not None else settings.buflo_cell_size
            return [(f"tau_{_number_label(tau)}", BufloParams(tau=tau, rho=rho, cell_size=cell_size))
                    for tau in require(args.tau, "--tau")]
        rho_out = args.rho_out if args.rho_out is not None else settings.tamaraw_rho_out
        rho_in = args.rho_in if args.rho_in is not None else settings.tamaraw_rho_in
        cell_size = args.cell_size if args.cell_size is not None else DEFAULT_CELL_SIZE
        return [(f"L_{L}", TamarawParams(L=L, rho_out=rho_out, rho_in=rho_in, cell_size=cell_size))
                for L in require(args.L, "--L")]
    except ValidationError as e:
        raise UsageError(f"invalid {kind.value} parameters: {e}")


def run(args: argparse.Namespace, config: PipelineConfig) -> None:
    if not config.dataset:
        raise UsageError("defend requires --dataset")
    if args.defense is None:
        raise UsageError("defend requires --defense")
    kind = DefenseKind(args.defense)
    sweep = sweep_params(args)
    dataset = load_dataset(config.dataset, config.threads)
    out = output_dir(config, "defend")

    summary = []
    for label, params in sweep:
        defended, rows = defend_dataset(dataset, kind, params, params.cell_size, config.threads)
        target = out / label
        write_dataset(defended, target)
        write_csv(rows_from(rows), target / "overhead.csv", OVERHEAD_COLUMNS)
        bandwidth, latency = overhead_summary(rows)
        summary.append({"defense": kind.value, "setting": label, "traces": len(rows),
                        "bandwidth_overhead": bandwidth, "latency_overhead": latency})
        logger.info(f"{kind.value} {label}: 带宽开销 {bandwidth:.3f}x, 时延开销 {latency:.3f}x")

    write_csv(summary, out / "overhead_summary.csv")
    write_manifest(out, args.command_name, snapshot(args, config), None)


def register(subparsers) -> None:
    parser = add_command(subparsers, "defend", run, "模拟 BuFLO / Tamaraw 防御")
    parser.add_argument("--dataset", default=None, help="trace 数据集目录")
    parser.add_argument("--defense", choices=[k.value for k in DefenseKind], default=None)
    parser.add_argument("--cell-size", type=int, default=None, help="字节长度转 cell 的大小，默认 512")
    parser.add_argument("--tau", type=float_list, default=None, help="BuFLO 最短传输时间（秒），可逗号分隔多个")
    parser.add_argument("--rho", type=float, default=None, help="BuFLO 发送间隔（秒）")
    parser.add_argument("--L", dest="L", type=int_list, default=None, help="Tamaraw 填充倍数，可逗号分隔多个")
    parser.add_argument("--rho-out", type=float, default=None, help="Tamaraw 上行间隔（秒）")
    parser.add_argument("--rho-in", type=float, default=None, help="Tamaraw 下行间隔（秒）")
