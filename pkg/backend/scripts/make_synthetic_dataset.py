"""
生成合成 trace 数据集（用于演示和冒烟测试）

    python scripts/make_synthetic_dataset.py data/synthetic --sites 20 --visits 40 --seed 1

同时可以写出 open world 用的 monitored 列表和 Zipf 先验文件。
"""
import sys
from pathlib import Path

# 添加项目根目录到Python路径
backend_dir = Path(__file__).parent.parent
sys.path.insert(0, str(backend_dir))

import numpy as np

from app.logger import get_logger
from app.services.quantifier import zipf_prior
from app.services.synthetic import synthetic_dataset
from app.traces import write_dataset

logger = get_logger("scripts.make_synthetic_dataset")


def make_dataset(root: str, sites: int = 10, visits: int = 20, packets: int = 200, seed: int = 0,
                 monitored: int = 0, write_prior: bool = False) -> Path:
    """
    写出 root/<website>/<visit>.trace

    Args:
        monitored: 大于 0 时把前 monitored 个网站写入 root/monitored.txt
        write_prior: 按网站顺序写出 Zipf 先验 root/prior.txt
    """
    dataset = synthetic_dataset(sites, visits, np.random.default_rng(seed), base_packets=packets)
    root_path = write_dataset(dataset, root)
    print("=" * 60)
    print(f"已写出 {len(dataset)} 条 trace（{sites} 个网站 x {visits} 次访问）到 {root_path}")

    if monitored:
        if monitored >= sites:
            raise SystemExit("--monitored 必须小于 --sites")
        path = root_path / "monitored.txt"
        path.write_text("\n".join(dataset.websites[:monitored]) + "\n", encoding="utf-8")
        print(f"monitored 列表: {path}")

    if write_prior:
        prior = zipf_prior(range(1, sites + 1))
        path = root_path / "prior.txt"
        lines = [f"{website} {p!r}" for website, p in zip(dataset.websites, prior.probabilities)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"Zipf 先验: {path}")

    print("=" * 60)
    logger.info(f"合成数据集已生成: {root_path}")
    return root_path


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="生成合成 trace 数据集")
    parser.add_argument("root", help="输出目录")
    parser.add_argument("--sites", type=int, default=10, help="网站数（默认10）")
    parser.add_argument("--visits", type=int, default=20, help="每个网站的访问次数（默认20）")
    parser.add_argument("--packets", type=int, default=200, help="第一个网站的平均 cell 数（默认200）")
    parser.add_argument("--seed", type=int, default=0, help="随机种子")
    parser.add_argument("--monitored", type=int, default=0, help="写出前 N 个网站作为 monitored 列表")
    parser.add_argument("--zipf-prior", action="store_true", help="写出 Zipf 先验文件")

    args = parser.parse_args()

    make_dataset(args.root, args.sites, args.visits, args.packets, args.seed,
                 args.monitored, args.zipf_prior)
