"""特征提取器单元测试"""
import json

import numpy as np
import pytest

from app.errors import DataError
from app.extractors.count_extractor import burst_features, packet_count_features, round_count
from app.extractors.feature_extractor import (
    FeatureVector,
    extract_features,
    feature_table,
    read_feature_csv,
    write_feature_csv,
    write_layout_json,
)
from app.extractors.interval_extractor import (
    chunk_counts,
    interval_ii,
    interval_iii,
    interval_sizes,
    packet_distribution_features,
)
from app.extractors.layout import CATEGORY_RANGES, CATEGORY_SIZES, FEATURE_COUNT, CategoryId, category_of, feature_names
from app.extractors.ordering_extractor import all_ngram_features, cumul_features, ngram_features, transposition_features
from app.extractors.timing_extractor import packets_per_second, time_features
from app.models import INCOMING, OUTGOING, Trace
from app.services.synthetic import synthetic_dataset, synthetic_trace


@pytest.fixture(name="random_traces")
def random_traces_fixture():
    """不同长度、不同方向比例的随机 cell trace"""
    rng = np.random.default_rng(2024)
    traces = []
    for _ in range(1000):
        n = int(rng.integers(1, 900))
        traces.append(synthetic_trace(rng, n, rng.uniform(0.05, 0.95), rng.uniform(0.001, 0.3)))
    return traces


def _trace(directions, times=None):
    directions = np.asarray(directions)
    times = np.arange(len(directions), dtype=float) if times is None else np.asarray(times, dtype=float)
    return Trace(times, directions)


def test_layout_sizes():
    """14 个类别，共 3043 维"""
    assert FEATURE_COUNT == 3043
    assert [CATEGORY_SIZES[c] for c in CategoryId] == [13, 24, 124, 604, 600, 602, 586, 225, 11, 20, 2, 2, 126, 104]
    assert CATEGORY_RANGES[CategoryId.PACKET_COUNT] == (0, 13)
    assert CATEGORY_RANGES[CategoryId.CUMUL] == (2939, 3043)
    names = feature_names()
    assert len(names) == 3043
    assert category_of(names[0]) == 1
    assert category_of(names[-1]) == 14


def test_every_trace_yields_3043_features(random_traces):
    """每条 trace 都得到 3043 个有限值，各类别大小一致"""
    for trace in random_traces:
        vector = extract_features(trace)
        assert vector.values.shape == (3043,)
        assert np.all(np.isfinite(vector.values))
        for category in CategoryId:
            assert len(vector.category(category)) == CATEGORY_SIZES[category]


def test_conservation_invariants(random_traces):
    """n-gram、interval 直方图与块计数的守恒关系"""
    for trace in random_traces:
        n = len(trace)
        for order in (2, 3, 4, 5, 6):
            assert ngram_features(trace, order).sum() == max(0, n - order + 1)
        for direction, offset in ((INCOMING, 0), (OUTGOING, 300)):
            count = len(interval_sizes(trace, direction))
            assert interval_ii(trace)[offset:offset + 300].sum() == count
        iii = interval_iii(trace)
        assert iii[:292].sum() + iii[584] == len(interval_sizes(trace, INCOMING))
        assert iii[292:584].sum() + iii[585] == len(interval_sizes(trace, OUTGOING))
        distribution = packet_distribution_features(trace)
        chunks = distribution[:200]
        assert distribution[204:224].sum() == pytest.approx(chunks.sum())
        assert distribution[224] == pytest.approx(chunks.sum())
        assert chunks.sum() == min(n, 6000) - np.sum(trace.directions[:6000] == INCOMING)


def test_packet_count_features():
    trace = Trace(np.arange(4, dtype=float), np.array([1, 1, 1, -1]))
    features = packet_count_features(trace)
    assert features[:5].tolist() == [4.0, 3.0, 1.0, 0.75, 0.25]
    assert features[8:11].tolist() == [4.0, 3.0, 1.0]


def test_round_count_half_up():
    assert round_count(103) == 100.0
    assert round_count(112.5) == 125.0
    assert round_count(0) == 0.0


def test_ngram_order():
    """-1 排在 +1 前面：(-1,-1), (-1,+1), (+1,-1), (+1,+1)"""
    trace = _trace([-1, 1, 1, -1])
    assert ngram_features(trace, 2).tolist() == [0.0, 1.0, 1.0, 1.0]
    assert len(all_ngram_features(trace)) == 124


def test_transposition_positions():
    trace = _trace([1, -1, 1, 1, -1])
    features = transposition_features(trace)
    assert features[:3].tolist() == [0.0, 2.0, 3.0]
    assert features[300:302].tolist() == [1.0, 4.0]
    assert features[600] == pytest.approx(5.0 / 3.0)
    assert features[602] == pytest.approx(2.5)


def test_interval_sizes_count_packets_between():
    trace = _trace([1, -1, -1, 1, 1, -1, 1])
    assert interval_sizes(trace, INCOMING).tolist() == [2, 0, 1]
    assert interval_sizes(trace, OUTGOING).tolist() == [0, 2]


def test_interval_iii_grouping():
    """bin 3–5 合并为一个和"""
    sizes_trace = _trace([1, -1, -1, -1, 1, -1, -1, -1, -1, 1])
    iii = interval_iii(sizes_trace)
    # 下行 interval 大小 3 与 4 都落在第 4 个位置（3–5 组）
    assert iii[3] == 2.0
    assert iii[:292].sum() == 2.0


def test_chunk_counts_pad():
    trace = _trace([-1] * 45)
    counts = chunk_counts(trace)
    assert counts[:2].tolist() == [30.0, 15.0]
    assert counts[2:].sum() == 0.0


def test_burst_features():
    """两个相邻下行包切分上行 burst"""
    trace = _trace([-1, -1, 1, -1, 1, 1, -1, -1, -1])
    features = burst_features(trace)
    assert features[0] == 3.0  # 最大
    assert features[2] == 2.0  # 个数：[-1,-1,(1),-1] 与 [-1,-1,-1]
    assert features[8] == 3.0


def test_time_features_short_streams():
    """少于两个包的流间隔统计为 0"""
    trace = Trace(np.array([0.0, 1.0]), np.array([1, -1]))
    features = time_features(trace)
    assert features[:4].tolist() == [1.0, 1.0, 0.0, 1.0]
    assert features[4:12].tolist() == [0.0] * 8
    assert features[12:16].tolist() == [0.25, 0.5, 0.75, 1.0]


def test_packets_per_second():
    trace = Trace(np.array([0.0, 0.5, 1.2, 3.9]), np.array([1, 1, -1, 1]))
    features = packets_per_second(trace)
    assert features[:4].tolist() == [2.0, 1.0, 0.0, 1.0]
    assert features[100 + 4] == 2.0  # max
    assert features[105] == 4.0  # 前 5 秒之和
    assert features[125] == 4.0  # 覆盖 4 秒


def test_cumul_endpoints():
    trace = _trace([1, 1, -1, 1])
    features = cumul_features(trace)
    assert features[0] == 1.0
    assert features[99] == 2.0
    assert features[100:].tolist() == [3.0, 1.0, 3.0, 1.0]


def test_empty_trace_rejected():
    with pytest.raises(DataError):
        extract_features(Trace(np.zeros(0), np.zeros(0, dtype=np.int64)))


def test_feature_vector_shape_checked():
    with pytest.raises(DataError):
        FeatureVector(np.zeros(10))


def test_feature_csv_round_trip(tmp_path):
    dataset = synthetic_dataset(2, 3, np.random.default_rng(3), base_packets=40)
    table = feature_table(dataset, threads=2)
    path = write_feature_csv(table, tmp_path / "features.csv")
    again = read_feature_csv(path)
    assert np.array_equal(again.values, table.values)
    assert again.website_ids == table.website_ids
    assert again.visit_ids == table.visit_ids
    assert again.websites == ("site00", "site01")


def test_read_feature_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_feature_csv(path)


def test_layout_json(tmp_path):
    layout = json.loads(write_layout_json(tmp_path / "layout.json").read_text(encoding="utf-8"))
    assert layout["total"] == 3043
    assert len(layout["categories"]) == 14
