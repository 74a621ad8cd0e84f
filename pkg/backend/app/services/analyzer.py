"""
互信息分析器：单特征泄露排名、冗余剪枝、DBSCAN 特征聚类

build_grouping 的顺序：排名 → 去掉常量特征 → 按排名贪心剪枝并取前 top_n → 聚类。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import DBSCAN
from tqdm import tqdm

from app.errors import DataError, WfleakError
from app.extractors.layout import CATEGORY_NAMES, CategoryId, category_of
from app.logger import get_logger
from app.models import FeatureTable
from app.schemas import ClusterReport, GroupingReport, LeakageEstimate, McConfig, RankedFeature, WorldConfig
from app.services.density import DEFAULT_BETA
from app.services.infotheory import LazyNmi
from app.services.quantifier import leakage_for_clusters

logger = get_logger(__name__)

DEFAULT_TOP_N = 100
DEFAULT_PRUNE_THRESHOLD = 0.9
DEFAULT_EPS = 0.4
SUMMARY_BINS = ((0.0, 1.0, "<1"), (1.0, 2.0, "1-2"), (2.0, 3.0, "2-3"), (3.0, float("inf"), ">=3"))


@dataclass(frozen=True)
class RankedEntry:
    index: int
    name: str
    bits: float
    stderr: float = 0.0
    failed: bool = False


@dataclass(frozen=True)
class LeakageRanking:
    """单特征泄露，按泄露降序；相同时按特征下标；失败的排在最后"""
    entries: Tuple[RankedEntry, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.entries, key=lambda e: (e.failed, -e.bits, e.index)))
        object.__setattr__(self, "entries", ordered)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> List[int]:
        return [e.index for e in self.entries]

    def bits_of(self, index: int) -> float:
        for entry in self.entries:
            if entry.index == index:
                return entry.bits
        raise KeyError(index)


@dataclass(frozen=True)
class FeatureGrouping:
    """
    剪枝与聚类的结果（下标都是特征表的列号）

    clusters 两两不相交，并集等于 kept_features。
    """
    kept_features: Tuple[int, ...]
    pruned_redundant: Tuple[Tuple[int, int], ...]
    clusters: Tuple[Tuple[int, ...], ...]
    dropped_degenerate: Tuple[int, ...] = ()

    def __post_init__(self):
        flat = [j for c in self.clusters for j in c]
        if len(flat) != len(set(flat)):
            raise DataError("clusters overlap")
        if set(flat) != set(self.kept_features):
            raise DataError("clusters do not cover the kept features")
        dropped = [d for d, _ in self.pruned_redundant]
        if len(dropped) != len(set(dropped)):
            raise DataError("a pruned feature has more than one keeper")


def individual_leakage(table: FeatureTable, column: int, world: WorldConfig, mc: McConfig,
                       beta: int = DEFAULT_BETA, templates: Optional[Mapping[int, float]] = None
                       ) -> LeakageEstimate:
    """单个特征的泄露；整列为常量时直接为 0"""
    values = table.values[:, column]
    if np.all(values == values[0]):
        return LeakageEstimate(bits=0.0, mc_standard_error=0.0, samples_used=0)
    return leakage_for_clusters(table, [(column,)], world, mc, beta, templates=templates)


def _feature_seed(seed: int, column: int) -> int:
    return int(np.random.SeedSequence([seed, column]).generate_state(1)[0])


def rank_features(table: FeatureTable, world: WorldConfig, mc: McConfig,
                  beta: int = DEFAULT_BETA, features: Optional[Sequence[int]] = None,
                  threads: int = 1, progress: bool = False,
                  templates: Optional[Mapping[int, float]] = None) -> LeakageRanking:
    """
    计算每个特征的单独泄露并排序

    每个特征使用由 (seed, 列号) 派生的种子；估计失败的特征记为失败并排在最后。
    """
    columns = list(range(table.n_features)) if features is None else list(features)
    logger.info(f"开始特征排名: {len(columns)} 个特征, k={mc.k}")

    def measure(column: int) -> RankedEntry:
        name = table.feature_names[column]
        feature_mc = McConfig(k=mc.k, seed=_feature_seed(mc.seed, column))
        try:
            estimate = individual_leakage(table, column, world, feature_mc, beta, templates)
        except (WfleakError, ArithmeticError, ValueError) as e:
            logger.warning(f"特征 {name} 泄露估计失败: {e}")
            return RankedEntry(column, name, 0.0, 0.0, True)
        return RankedEntry(column, name, estimate.bits, estimate.mc_standard_error)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(tqdm(pool.map(measure, columns), total=len(columns),
                                disable=not progress, desc="rank"))
    else:
        entries = [measure(c) for c in tqdm(columns, disable=not progress, desc="rank")]

    ranking = LeakageRanking(tuple(entries))
    failed = sum(e.failed for e in ranking.entries)
    if failed:
        logger.warning(f"{failed} 个特征的泄露估计失败，已排在最后")
    logger.info(f"特征排名完成，最大单特征泄露 {ranking.entries[0].bits:.4f} bits" if len(ranking)
                else "没有可排名的特征")
    return ranking


def prune_redundant(features: Sequence[int], nmi, threshold: float = DEFAULT_PRUNE_THRESHOLD,
                    max_kept: Optional[int] = None) -> Tuple[List[int], List[Tuple[int, int]]]:
    """
    按给定顺序（排名顺序）贪心剪枝

    特征与某个已保留特征的 NMI 严格大于 threshold 时被剪掉，保留者取排名最高的那个。
    nmi 需要提供 value(i, j)。

    Returns:
        (保留的特征, [(被剪掉的特征, 保留者)])
    """
    kept: List[int] = []
    pruned: List[Tuple[int, int]] = []
    for feature in features:
        if max_kept is not None and len(kept) >= max_kept:
            break
        keeper = next((k for k in kept if nmi.value(feature, k) > threshold), None)
        if keeper is None:
            kept.append(feature)
        else:
            pruned.append((feature, keeper))
    return kept, pruned


def cluster_features(distance: np.ndarray, eps: float = DEFAULT_EPS) -> List[Tuple[int, ...]]:
    """
    DBSCAN（min_samples=1，每个特征都属于某个簇）

    簇按首次出现的位置编号，簇内按位置排序。
    """
    d = np.clip(np.asarray(distance, dtype=float), 0.0, 1.0)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError("distance matrix must be square")
    if d.shape[0] == 0:
        return []
    np.fill_diagonal(d, 0.0)
    labels = DBSCAN(eps=eps, min_samples=1, metric="precomputed").fit_predict(d)
    clusters: Dict[int, List[int]] = {}
    for position, label in enumerate(labels):
        clusters.setdefault(int(label), []).append(position)
    return [tuple(members) for members in clusters.values()]


def build_grouping(table: FeatureTable, world: WorldConfig, mc: McConfig,
                   top_n: int = DEFAULT_TOP_N, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
                   eps: float = DEFAULT_EPS, beta: int = DEFAULT_BETA,
                   ranking: Optional[LeakageRanking] = None, threads: int = 1,
                   progress: bool = False, templates: Optional[Mapping[int, float]] = None
                   ) -> Tuple[FeatureGrouping, LeakageRanking]:
    """
    排名 → 去掉常量 → 剪枝并取前 top_n → 聚类

    常量特征不参与剪枝，也不占用 top_n 的名额。

    Raises:
        DataError: 没有任何特征留下
    """
    if ranking is None:
        ranking = rank_features(table, world, mc, beta, threads=threads, progress=progress,
                                templates=templates)
    lazy = LazyNmi(table.values, table.feature_names)
    degenerate = [j for j in ranking.order if lazy.is_constant(j)]
    if degenerate:
        logger.info(f"去掉 {len(degenerate)} 个常量特征")
    candidates = [j for j in ranking.order if not lazy.is_constant(j)]
    kept, pruned = prune_redundant(candidates, lazy, prune_threshold, max_kept=top_n)
    if not kept:
        raise DataError("no informative features left after pruning")
    if len(kept) < top_n:
        logger.warning(f"剪枝后只剩 {len(kept)} 个特征（少于 top_n={top_n}），全部使用")

    matrix = lazy.submatrix(kept, threads)
    clusters = [tuple(kept[p] for p in members) for members in cluster_features(matrix.distance, eps)]
    logger.info(f"分组完成: {len(kept)} 个特征, 剪掉 {len(pruned)} 个冗余特征, {len(clusters)} 个簇")
    grouping = FeatureGrouping(tuple(kept), tuple(pruned), tuple(clusters), tuple(degenerate))
    return grouping, ranking


def _category_label(name: str) -> str:
    try:
        return CATEGORY_NAMES[CategoryId(category_of(name))]
    except ValueError:
        return "other"


def grouping_report(grouping: FeatureGrouping, ranking: LeakageRanking, table: FeatureTable,
                    top_n: int, prune_threshold: float, eps: float) -> GroupingReport:
    """分组结果与来源（每个簇里各类别的特征数）"""
    names = table.feature_names
    clusters = []
    for i, cluster in enumerate(grouping.clusters):
        categories: Dict[str, int] = {}
        for j in cluster:
            label = _category_label(names[j])
            categories[label] = categories.get(label, 0) + 1
        clusters.append(ClusterReport(cluster=i, features=[names[j] for j in cluster],
                                      categories=categories))
    return GroupingReport(
        kept_features=[names[j] for j in grouping.kept_features],
        pruned={names[d]: names[k] for d, k in grouping.pruned_redundant},
        clusters=clusters,
        dropped_degenerate=[names[j] for j in grouping.dropped_degenerate],
        ranking=[RankedFeature(index=e.index, name=e.name, bits=e.bits, stderr=e.stderr, failed=e.failed)
                 for e in ranking.entries],
        top_n=top_n,
        prune_threshold=prune_threshold,
        eps=eps,
    )


def grouping_from_report(report: GroupingReport, table: FeatureTable) -> FeatureGrouping:
    """
    从分组报告恢复 FeatureGrouping（按列名对应到特征表）

    Raises:
        DataError: 报告中的特征不在特征表中
    """
    index = {name: j for j, name in enumerate(table.feature_names)}
    missing = [n for n in report.kept_features if n not in index]
    if missing:
        raise DataError(f"grouping refers to unknown features: {', '.join(missing[:5])}")
    return FeatureGrouping(
        kept_features=tuple(index[n] for n in report.kept_features),
        pruned_redundant=tuple((index[d], index[k]) for d, k in report.pruned.items()
                               if d in index and k in index),
        clusters=tuple(tuple(index[n] for n in c.features) for c in report.clusters),
        dropped_degenerate=tuple(index[n] for n in report.dropped_degenerate if n in index),
    )


def ranking_from_report(report: GroupingReport) -> LeakageRanking:
    return LeakageRanking(tuple(RankedEntry(r.index, r.name, r.bits, r.stderr, r.failed)
                                for r in report.ranking))


def leakage_summary(ranking: LeakageRanking) -> Dict[str, float]:
    """单特征泄露的分布：各区间的特征数与最大值（不含失败的特征）"""
    bits = np.array([e.bits for e in ranking.entries if not e.failed])
    summary: Dict[str, float] = {}
    for low, high, label in SUMMARY_BINS:
        summary[label] = int(np.sum((bits >= low) & (bits < high)))
    summary["max"] = float(bits.max()) if len(bits) else 0.0
    summary["features"] = int(len(bits))
    return summary
