"""trace 解析、数据集加载与 cell 归一化测试"""
import numpy as np
import pytest

from app.errors import DatasetError, DataError, TraceFormatError
from app.models import INCOMING, OUTGOING, Dataset, Trace
from app.services.synthetic import synthetic_dataset
from app.traces import (
    cell_dataset,
    load_dataset,
    parse_trace,
    read_trace,
    serialize_trace,
    to_cell_sequence,
    write_dataset,
)


@pytest.fixture(name="dataset_dir")
def dataset_dir_fixture(tmp_path):
    """两个网站、每个两次访问的小数据集"""
    root = tmp_path / "dataset"
    (root / "alpha").mkdir(parents=True)
    (root / "beta").mkdir(parents=True)
    (root / "alpha" / "0.trace").write_text("0.0\t-512\n0.1\t1024\n0.2\t512\n", encoding="utf-8")
    (root / "alpha" / "1.trace").write_text("1.0\t-512\n1.5\t600\n", encoding="utf-8")
    (root / "beta" / "0.trace").write_text("0.0\t-100\n0.3\t1500\n0.3\t-40\n", encoding="utf-8")
    (root / "beta" / "1.trace").write_text("0.0\t300\n", encoding="utf-8")
    return root


def test_parse_trace_shifts_times_to_zero():
    """首包时间平移为 0"""
    trace = parse_trace("# comment\n2.5\t-512\n\n3.0\t1024\n", "site", "7")
    assert trace.times.tolist() == [0.0, 0.5]
    assert trace.lengths.tolist() == [-512, 1024]
    assert trace.website_id == "site"
    assert trace.visit_id == "7"


def test_parse_trace_keeps_order_of_equal_times():
    """时间相同的包保持文件顺序"""
    trace = parse_trace("0.0\t1\n0.0\t-1\n0.0\t1\n")
    assert trace.lengths.tolist() == [1, -1, 1]


def test_direction_convention():
    """正长度为下行"""
    trace = parse_trace("0\t-10\n1\t20\n")
    assert trace.directions.tolist() == [OUTGOING, INCOMING]
    assert trace.count(INCOMING) == 1
    assert trace.duration == 1.0


@pytest.mark.parametrize("text, line_number", [
    ("0.0\t10\n0.1\tabc\n", 2),
    ("0.0\t10\n0.1\t0\n", 2),
    ("0.5\t10\n0.1\t10\n", 2),
    ("0.0 10 extra\n", 1),
])
def test_parse_trace_reports_line_number(text, line_number):
    """格式错误带行号"""
    with pytest.raises(TraceFormatError) as info:
        parse_trace(text)
    assert info.value.line_number == line_number


def test_parse_trace_rejects_empty():
    with pytest.raises(TraceFormatError):
        parse_trace("# nothing\n\n")


def test_serialize_round_trip():
    trace = Trace(np.array([0.0, 0.123456789, 2.0]), np.array([-512, 1500, 1]))
    again = parse_trace(serialize_trace(trace))
    assert np.array_equal(again.times, trace.times)
    assert np.array_equal(again.lengths, trace.lengths)


def test_trace_rejects_decreasing_times():
    with pytest.raises(DataError):
        Trace(np.array([1.0, 0.5]), np.array([1, -1]))


def test_to_cell_sequence_expands_by_cell_size():
    """长度 |l| 展开为 ⌈|l|/512⌉ 个同向 cell"""
    trace = Trace(np.array([0.0, 0.2]), np.array([1024, -600]))
    cells = to_cell_sequence(trace, 512)
    assert cells.lengths.tolist() == [1, 1, -1, -1]
    assert cells.times.tolist() == [0.0, 0.0, 0.2, 0.2]


def test_to_cell_sequence_keeps_unit_traces():
    trace = Trace(np.array([0.0, 1.0]), np.array([1, -1]))
    assert to_cell_sequence(trace) is trace


def test_load_dataset_orders_sites_and_visits(dataset_dir):
    dataset = load_dataset(dataset_dir)
    assert dataset.websites == ("alpha", "beta")
    assert [(t.website_id, t.visit_id) for t in dataset.traces] == [
        ("alpha", "0"), ("alpha", "1"), ("beta", "0"), ("beta", "1")]
    assert dataset.traces[1].times.tolist() == [0.0, 0.5]


def test_load_dataset_skips_bad_files(dataset_dir):
    """无法解析的文件跳过；没有有效 trace 的网站被排除"""
    (dataset_dir / "alpha" / "2.trace").write_text("0.0\tbad\n", encoding="utf-8")
    (dataset_dir / "gamma").mkdir()
    (dataset_dir / "gamma" / "0.trace").write_text("", encoding="utf-8")
    dataset = load_dataset(dataset_dir, threads=2)
    assert dataset.websites == ("alpha", "beta")
    assert dataset.report.skipped_count == 2
    assert dataset.report.excluded_websites == ("gamma",)


def test_load_dataset_missing_root(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing")


def test_write_dataset_mirrors_layout(tmp_path):
    dataset = cell_dataset(synthetic_dataset(3, 2, np.random.default_rng(1), base_packets=20))
    write_dataset(dataset, tmp_path / "copy")
    loaded = load_dataset(tmp_path / "copy")
    assert loaded.websites == dataset.websites
    assert list(loaded.traces) == list(dataset.traces)


def test_restrict_websites_relabels_duplicates():
    dataset = synthetic_dataset(2, 3, np.random.default_rng(0), base_packets=10)
    restricted = dataset.restrict_websites(["site01", "site01"])
    assert restricted.websites == ("site01", "site01#1")
    assert len(restricted) == 6


def test_resample_per_website_keeps_sizes():
    dataset = synthetic_dataset(3, 4, np.random.default_rng(0), base_packets=10)
    resampled = dataset.resample_per_website(np.random.default_rng(5))
    assert isinstance(resampled, Dataset)
    assert {w: len(t) for w, t in resampled.by_website().items()} == {"site00": 4, "site01": 4, "site02": 4}
