"""
合成数据生成

已知泄露的离散世界、可分/不可分世界、分块相关特征，以及按网站区分的
合成 trace 数据集，供脚本和测试使用。
"""
from typing import List, Optional, Sequence

import numpy as np

from app.models import Dataset, FeatureTable, Trace


def site_names(n_sites: int) -> List[str]:
    return [f"site{i:02d}" for i in range(n_sites)]


def _table(values: np.ndarray, labels: Sequence[int], n_sites: int,
           names: Optional[Sequence[str]] = None) -> FeatureTable:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    websites = site_names(n_sites)
    website_ids = tuple(websites[s] for s in labels)
    visit_ids = tuple(str(i) for i in range(len(labels)))
    names = tuple(names) if names is not None else tuple(f"f{j}" for j in range(values.shape[1]))
    return FeatureTable(values, website_ids, visit_ids, names, tuple(websites))


def random_conditionals(n_sites: int, n_values: int, rng: np.random.Generator,
                        concentration: float = 1.0) -> np.ndarray:
    """每个网站一个取值分布（Dirichlet 随机），n_sites × n_values"""
    return rng.dirichlet(np.full(n_values, concentration), size=n_sites)


def joint_from_conditionals(conditionals: np.ndarray, prior: Optional[Sequence[float]] = None) -> np.ndarray:
    """联合分布表：行是网站，列是特征取值"""
    conditionals = np.asarray(conditionals, dtype=float)
    p = np.full(len(conditionals), 1.0 / len(conditionals)) if prior is None else np.asarray(prior)
    return conditionals * p[:, None]


def sample_discrete_table(conditionals: np.ndarray, m: int, rng: np.random.Generator) -> FeatureTable:
    """每个网站按自己的取值分布抽 m 个观测（取值为 0..n_values-1）"""
    conditionals = np.asarray(conditionals, dtype=float)
    labels: List[int] = []
    values: List[np.ndarray] = []
    for site, row in enumerate(conditionals):
        values.append(rng.choice(len(row), size=m, p=row).astype(float))
        labels.extend([site] * m)
    return _table(np.concatenate(values), labels, len(conditionals))


def separable_table(n_sites: int, m: int, rng: np.random.Generator) -> FeatureTable:
    """网站之间取值不相交：网站 s 的取值在 {10s, 10s+1, 10s+2} 中"""
    values = np.concatenate([10.0 * s + rng.integers(0, 3, size=m) for s in range(n_sites)])
    labels = np.repeat(np.arange(n_sites), m)
    return _table(values, labels, n_sites)


def identical_table(n_sites: int, m: int, rng: np.random.Generator) -> FeatureTable:
    """所有网站同分布（标准正态）"""
    values = rng.standard_normal(n_sites * m)
    labels = np.repeat(np.arange(n_sites), m)
    return _table(values, labels, n_sites)


def _noisy_copies(latent: np.ndarray, copies: int, n_values: int, keep: float,
                  rng: np.random.Generator) -> np.ndarray:
    """每个副本以概率 keep 等于 latent，否则为均匀随机取值"""
    out = np.empty((len(latent), copies))
    for j in range(copies):
        replace = rng.random(len(latent)) >= keep
        out[:, j] = np.where(replace, rng.integers(0, n_values, size=len(latent)), latent)
    return out


def block_table(m: int, rng: np.random.Generator, block_size: int = 5, keep: float = 0.93,
                n_constant: int = 0) -> FeatureTable:
    """
    4 个网站、两个相互独立的信息块

    网站 s 编码两个比特 a = s // 2、b = s % 2；块一的潜变量为 4a + U{0..3}，
    块二为 4b + U{0..3}。块内每个特征是潜变量的带噪副本，块间独立。
    """
    labels = np.repeat(np.arange(4), m)
    a, b = labels // 2, labels % 2
    latent_1 = 4 * a + rng.integers(0, 4, size=len(labels))
    latent_2 = 4 * b + rng.integers(0, 4, size=len(labels))
    columns = [_noisy_copies(latent_1, block_size, 8, keep, rng),
               _noisy_copies(latent_2, block_size, 8, keep, rng)]
    if n_constant:
        columns.append(np.zeros((len(labels), n_constant)))
    return _table(np.hstack(columns), labels, 4)


def informative_table(n_sites: int, m: int, rng: np.random.Generator, n_informative: int = 10,
                      n_constant: int = 0, n_redundant: int = 0, noise: float = 1.0) -> FeatureTable:
    """
    n_informative 个特征 = 网站编号 + 独立高斯噪声；
    n_redundant 个特征是前几个信息特征的严格单调变换；其余为常量
    """
    labels = np.repeat(np.arange(n_sites), m)
    informative = labels[:, None] + noise * rng.standard_normal((len(labels), n_informative))
    columns = [informative]
    if n_redundant:
        sources = informative[:, np.arange(n_redundant) % n_informative]
        columns.append(2.0 * sources + 1.0)
    if n_constant:
        columns.append(np.ones((len(labels), n_constant)))
    return _table(np.hstack(columns), labels, n_sites)


def synthetic_trace(rng: np.random.Generator, n_packets: int, incoming_fraction: float,
                    mean_gap: float, website_id: str = "", visit_id: str = "") -> Trace:
    """随机 cell trace：方向按比例随机，间隔服从指数分布，首包时间为 0"""
    n_packets = max(1, int(n_packets))
    directions = np.where(rng.random(n_packets) < incoming_fraction, 1, -1)
    gaps = rng.exponential(mean_gap, size=n_packets)
    gaps[0] = 0.0
    return Trace(np.cumsum(gaps), directions, website_id, visit_id)


def synthetic_dataset(n_sites: int, visits: int, rng: np.random.Generator,
                      base_packets: int = 200) -> Dataset:
    """
    每个网站有自己的包数规模、下行比例与发送间隔，访问之间有随机扰动
    """
    traces: List[Trace] = []
    websites = site_names(n_sites)
    for s, website in enumerate(websites):
        size = base_packets * (1.0 + 0.5 * s)
        fraction = 0.55 + 0.35 * s / max(1, n_sites - 1)
        gap = 0.01 * (1 + s % 3)
        for v in range(visits):
            n_packets = rng.poisson(size)
            traces.append(synthetic_trace(rng, n_packets, fraction, gap, website, f"{v:03d}"))
    return Dataset(tuple(traces), tuple(websites))
