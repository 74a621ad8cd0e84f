"""bounds 子命令：准确率对应的泄露区间，以及 α 扫描的区间带"""
import argparse

from app.commands import add_command, float_list, snapshot
from app.errors import UsageError
from app.logger import get_logger
from app.schemas import PipelineConfig
from app.services.artifacts import write_csv, write_manifest
from app.services.bounds import alpha_sweep, leakage_bounds, uncertainty_range
from app.services.infotheory import DiscreteDistribution, entropy
from app.services.pipeline import output_dir
from app.services.quantifier import read_prior_weights

logger = get_logger(__name__)

BOUNDS_COLUMNS = ("n", "alpha", "entropy_bits", "min_bits", "max_bits", "range_bits")


def _prior(args: argparse.Namespace) -> DiscreteDistribution:
    """--prior-file 给出先验时 n 取文件中的网站数，否则为 n 个网站的均匀先验"""
    if args.prior_file:
        weights = read_prior_weights(args.prior_file)
        if args.n is not None and args.n != len(weights):
            raise UsageError(f"--n {args.n} does not match the {len(weights)} websites in {args.prior_file}")
        return DiscreteDistribution.from_counts(list(weights.values()))
    if args.n is None:
        raise UsageError("bounds requires --n or --prior-file")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    return DiscreteDistribution.uniform(args.n)


def run(args: argparse.Namespace, config: PipelineConfig) -> None:
    prior = _prior(args)
    n = len(prior)
    out = output_dir(config, "bounds")

    if args.accuracy:
        rows = []
        for alpha in args.accuracy:
            if not 0.0 <= alpha <= 1.0:
                raise UsageError(f"--accuracy must lie in [0, 1], got {alpha}")
            bounds = leakage_bounds(prior, alpha)
            rows.append({"n": n, "alpha": alpha, "entropy_bits": entropy(prior),
                         "min_bits": bounds.min_bits, "max_bits": bounds.max_bits,
                         "range_bits": uncertainty_range(n, alpha)})
            logger.info(f"n={n}, α={alpha}: 泄露在 [{bounds.min_bits:.4f}, {bounds.max_bits:.4f}] bits 之间")
        write_csv(rows, out / "bounds.csv", BOUNDS_COLUMNS)

    write_csv(alpha_sweep(n, prior), out / "alpha_sweep.csv", ("alpha", "min_bits", "max_bits", "range_bits"))
    write_manifest(out, args.command_name, snapshot(args, config), None)


def register(subparsers) -> None:
    parser = add_command(subparsers, "bounds", run, "分类准确率与信息泄露的对应区间")
    parser.add_argument("--n", type=int, default=None, help="网站数")
    parser.add_argument("--accuracy", type=float_list, default=None, help="分类准确率，可逗号分隔多个")
    parser.add_argument("--prior-file", default=None, help="<website> <weight> 每行一条的先验文件")
