"""特征排名、冗余剪枝与聚类测试"""
import numpy as np
import pytest

from app.errors import DataError
from app.schemas import McConfig
from app.services.analyzer import (
    FeatureGrouping,
    LeakageRanking,
    RankedEntry,
    build_grouping,
    cluster_features,
    grouping_from_report,
    grouping_report,
    leakage_summary,
    prune_redundant,
    rank_features,
    ranking_from_report,
)
from app.services.infotheory import LazyNmi
from app.services.quantifier import build_world
from app.services.synthetic import block_table, informative_table


@pytest.fixture(name="mc")
def mc_fixture():
    return McConfig(k=200, seed=1)


@pytest.fixture(name="redundant_table")
def redundant_table_fixture():
    """3 个信息特征、2 个冗余副本（2x+1）、1 个常量特征"""
    return informative_table(4, 50, np.random.default_rng(7), n_informative=3,
                             n_redundant=2, n_constant=1)


def _ranking(bits):
    return LeakageRanking(tuple(RankedEntry(j, f"f{j}", b) for j, b in enumerate(bits)))


def test_ranking_order():
    """泄露降序，相同时按下标，失败的排最后"""
    ranking = LeakageRanking((
        RankedEntry(0, "f0", 1.0),
        RankedEntry(1, "f1", 2.0),
        RankedEntry(2, "f2", 0.0, failed=True),
        RankedEntry(3, "f3", 1.0),
    ))
    assert ranking.order == [1, 0, 3, 2]
    assert ranking.bits_of(3) == 1.0
    with pytest.raises(KeyError):
        ranking.bits_of(9)


def test_rank_features_puts_constant_last(mc):
    table = informative_table(4, 40, np.random.default_rng(3), n_informative=2, n_constant=1)
    world = build_world(table.websites)
    ranking = rank_features(table, world, mc)
    assert ranking.entries[-1].index == 2
    assert ranking.entries[-1].bits == 0.0
    assert all(e.bits > 0.3 for e in ranking.entries[:2])


def test_rank_features_independent_of_threads(mc):
    """每个特征的种子只取决于 (seed, 列号)"""
    table = informative_table(3, 30, np.random.default_rng(4), n_informative=3)
    world = build_world(table.websites)
    serial = rank_features(table, world, mc, threads=1)
    parallel = rank_features(table, world, mc, threads=3)
    assert [(e.index, e.bits) for e in serial.entries] == [(e.index, e.bits) for e in parallel.entries]


def test_prune_redundant_keeps_higher_ranked(redundant_table):
    lazy = LazyNmi(redundant_table.values)
    kept, pruned = prune_redundant([0, 1, 2, 3, 4], lazy, 0.9)
    assert kept == [0, 1, 2]
    assert pruned == [(3, 0), (4, 1)]


def test_prune_redundant_respects_rank_order(redundant_table):
    """排名靠前的副本成为保留者"""
    lazy = LazyNmi(redundant_table.values)
    kept, pruned = prune_redundant([3, 0, 1, 2], lazy, 0.9)
    assert kept == [3, 1, 2]
    assert pruned == [(0, 3)]


def test_prune_redundant_max_kept(redundant_table):
    lazy = LazyNmi(redundant_table.values)
    kept, _ = prune_redundant([0, 1, 2, 3, 4], lazy, 0.9, max_kept=2)
    assert kept == [0, 1]


def test_build_grouping_drops_degenerate(redundant_table, mc):
    world = build_world(redundant_table.websites)
    ranking = _ranking([5.0, 4.0, 3.0, 2.0, 1.0, 0.5])
    grouping, returned = build_grouping(redundant_table, world, mc, top_n=10, ranking=ranking)
    assert returned is ranking
    assert grouping.kept_features == (0, 1, 2)
    assert grouping.pruned_redundant == ((3, 0), (4, 1))
    assert grouping.dropped_degenerate == (5,)
    assert sorted(j for c in grouping.clusters for j in c) == [0, 1, 2]


def test_build_grouping_top_n(redundant_table, mc):
    world = build_world(redundant_table.websites)
    grouping, _ = build_grouping(redundant_table, world, mc, top_n=2,
                                 ranking=_ranking([5.0, 4.0, 3.0, 2.0, 1.0, 0.5]))
    assert grouping.kept_features == (0, 1)


def test_constant_features_do_not_take_top_n_slots(redundant_table, mc):
    """常量特征排在前面也不占 top_n 的名额"""
    world = build_world(redundant_table.websites)
    ranking = _ranking([4.0, 3.0, 2.0, 1.5, 1.0, 5.0])
    assert ranking.order[0] == 5
    grouping, _ = build_grouping(redundant_table, world, mc, top_n=3, ranking=ranking)
    assert grouping.kept_features == (0, 1, 2)
    assert grouping.dropped_degenerate == (5,)
    assert 5 not in [j for c in grouping.clusters for j in c]


def test_build_grouping_all_constant(mc):
    table = informative_table(2, 20, np.random.default_rng(0), n_informative=1, n_constant=2)
    world = build_world(table.websites)
    constant_only = LeakageRanking((RankedEntry(1, "f1", 0.0), RankedEntry(2, "f2", 0.0)))
    with pytest.raises(DataError):
        build_grouping(table, world, mc, ranking=constant_only)


def test_block_features_recover_two_clusters(mc):
    """两个独立信息块的带噪副本聚成两个簇"""
    table = block_table(250, np.random.default_rng(11), block_size=5, keep=0.93)
    world = build_world(table.websites)
    grouping, ranking = build_grouping(table, world, mc, top_n=100, prune_threshold=0.9, eps=0.4)
    assert len(ranking) == 10
    assert grouping.pruned_redundant == ()
    assert sorted(sorted(c) for c in grouping.clusters) == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]


def test_cluster_features_singletons():
    distance = np.array([[0.0, 0.9, 0.2], [0.9, 0.0, 0.95], [0.2, 0.95, 0.0]])
    assert cluster_features(distance, eps=0.4) == [(0, 2), (1,)]
    assert cluster_features(np.zeros((0, 0))) == []
    with pytest.raises(DataError):
        cluster_features(np.zeros((2, 3)))


def test_grouping_rejects_overlap():
    with pytest.raises(DataError):
        FeatureGrouping((0, 1), (), ((0, 1), (1,)))
    with pytest.raises(DataError):
        FeatureGrouping((0, 1, 2), (), ((0, 1),))


def test_grouping_report_round_trip(redundant_table, mc):
    world = build_world(redundant_table.websites)
    ranking = _ranking([5.0, 4.0, 3.0, 2.0, 1.0, 0.5])
    grouping, _ = build_grouping(redundant_table, world, mc, ranking=ranking)
    report = grouping_report(grouping, ranking, redundant_table, 100, 0.9, 0.4)
    assert report.pruned == {"f3": "f0", "f4": "f1"}
    assert all(c.categories == {"other": len(c.features)} for c in report.clusters)
    again = grouping_from_report(report, redundant_table)
    assert again == grouping
    assert ranking_from_report(report).order == ranking.order


def test_grouping_from_report_unknown_feature(redundant_table, mc):
    world = build_world(redundant_table.websites)
    ranking = _ranking([5.0, 4.0, 3.0, 2.0, 1.0, 0.5])
    grouping, _ = build_grouping(redundant_table, world, mc, ranking=ranking)
    report = grouping_report(grouping, ranking, redundant_table, 100, 0.9, 0.4)
    report.kept_features.append("missing")
    with pytest.raises(DataError):
        grouping_from_report(report, redundant_table)


def test_leakage_summary_bins():
    ranking = LeakageRanking((
        RankedEntry(0, "f0", 0.5),
        RankedEntry(1, "f1", 1.5),
        RankedEntry(2, "f2", 2.5),
        RankedEntry(3, "f3", 3.5),
        RankedEntry(4, "f4", 0.0, failed=True),
    ))
    summary = leakage_summary(ranking)
    assert summary == {"<1": 1, "1-2": 1, "2-3": 1, ">=3": 1, "max": 3.5, "features": 4}
