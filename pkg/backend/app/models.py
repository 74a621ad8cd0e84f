"""
数据模型定义

方向约定：length > 0 表示服务器到客户端（incoming，下行），length < 0 表示
客户端到服务器（outgoing，上行）。很多 WF 工具使用相反的约定，导入外部数据时要注意。
"""
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sqlmodel import Field, SQLModel

from app.errors import DataError

INCOMING = 1
OUTGOING = -1


class Packet(NamedTuple):
    """单个数据包：相对首包的时间（秒）与带符号长度"""
    time: float
    length: int


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Trace:
    """一次网站访问的数据包序列"""
    times: np.ndarray
    lengths: np.ndarray
    website_id: str = ""
    visit_id: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        lengths = np.asarray(self.lengths).reshape(-1)
        if len(times) != len(lengths):
            raise DataError("times and lengths differ in length")
        if len(lengths) and not np.all(np.equal(np.mod(lengths, 1), 0)):
            raise DataError("packet lengths must be integers")
        lengths = lengths.astype(np.int64)
        if np.any(lengths == 0):
            raise DataError("zero-length packet")
        if np.any(~np.isfinite(times)) or np.any(times < 0):
            raise DataError("packet times must be finite and non-negative")
        if np.any(np.diff(times) < 0):
            raise DataError("packet times must be non-decreasing")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "lengths", _readonly(lengths))

    @classmethod
    def from_packets(cls, packets: Sequence[Tuple[float, int]], website_id: str = "",
                     visit_id: str = "") -> "Trace":
        if len(packets) == 0:
            return cls(np.zeros(0), np.zeros(0, dtype=np.int64), website_id, visit_id)
        times, lengths = zip(*packets)
        return cls(np.asarray(times, dtype=float), np.asarray(lengths), website_id, visit_id)

    def __len__(self) -> int:
        return len(self.lengths)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.website_id == other.website_id and self.visit_id == other.visit_id
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.lengths, other.lengths))

    __hash__ = None

    @property
    def packets(self) -> Tuple[Packet, ...]:
        return tuple(Packet(float(t), int(l)) for t, l in zip(self.times, self.lengths))

    @property
    def directions(self) -> np.ndarray:
        """+1 下行 / -1 上行"""
        return np.sign(self.lengths).astype(np.int64)

    @property
    def duration(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.times[-1] - self.times[0])

    def count(self, direction: int) -> int:
        return int(np.sum(self.directions == direction))

    def relabel(self, website_id: Optional[str] = None, visit_id: Optional[str] = None) -> "Trace":
        return Trace(self.times, self.lengths,
                     self.website_id if website_id is None else website_id,
                     self.visit_id if visit_id is None else visit_id)


@dataclass(frozen=True)
class LoadReport:
    """load_dataset 的跳过记录"""
    skipped: Tuple[Tuple[str, str], ...] = ()
    excluded_websites: Tuple[str, ...] = ()

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)


@dataclass(frozen=True, eq=False)
class Dataset:
    """按网站分组的 trace 集合，网站顺序即 websites 的顺序"""
    traces: Tuple[Trace, ...]
    websites: Tuple[str, ...]
    report: LoadReport = field(default_factory=LoadReport)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "websites", tuple(self.websites))
        known = set(self.websites)
        for trace in self.traces:
            if trace.website_id not in known:
                raise DataError(f"trace website {trace.website_id!r} is not listed in websites")

    def __len__(self) -> int:
        return len(self.traces)

    def by_website(self) -> Dict[str, List[Trace]]:
        grouped: Dict[str, List[Trace]] = {website: [] for website in self.websites}
        for trace in self.traces:
            grouped[trace.website_id].append(trace)
        return grouped

    def restrict_websites(self, websites: Sequence[str]) -> "Dataset":
        """只保留给定网站（按给定顺序，允许重复时给重复项加后缀）"""
        grouped = self.by_website()
        traces: List[Trace] = []
        labels = _unique_labels(websites)
        for website, label in zip(websites, labels):
            traces.extend(t.relabel(website_id=label) for t in grouped[website])
        return Dataset(tuple(traces), tuple(labels), self.report)

    def resample_per_website(self, rng: np.random.Generator) -> "Dataset":
        """每个网站内有放回重采样，样本量不变"""
        traces: List[Trace] = []
        for website, members in self.by_website().items():
            picks = rng.integers(0, len(members), size=len(members))
            traces.extend(members[i] for i in picks)
        return Dataset(tuple(traces), self.websites, self.report)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """特征矩阵：每行一个 trace，列为特征"""
    values: np.ndarray
    website_ids: Tuple[str, ...]
    visit_ids: Tuple[str, ...]
    feature_names: Tuple[str, ...]
    websites: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("feature values must be a 2-d matrix")
        if values.shape[0] != len(self.website_ids) or values.shape[0] != len(self.visit_ids):
            raise DataError("row labels do not match the feature matrix")
        if values.shape[1] != len(self.feature_names):
            raise DataError("feature names do not match the feature matrix")
        if not np.all(np.isfinite(values)):
            raise DataError("feature values must be finite")
        websites = tuple(self.websites) or tuple(dict.fromkeys(self.website_ids))
        missing = set(self.website_ids) - set(websites)
        if missing:
            raise DataError(f"rows reference unknown websites: {sorted(missing)}")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "website_ids", tuple(self.website_ids))
        object.__setattr__(self, "visit_ids", tuple(self.visit_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "websites", websites)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def rows_for(self, website: str) -> np.ndarray:
        """某个网站的行下标"""
        return np.flatnonzero(np.asarray(self.website_ids) == website)

    def class_samples(self, columns: Sequence[int], websites: Optional[Sequence[str]] = None
                      ) -> List[np.ndarray]:
        """按网站取出若干列，返回每个网站一个 m×d 矩阵"""
        columns = list(columns)
        return [self.values[self.rows_for(website)][:, columns]
                for website in (websites or self.websites)]

    def select_columns(self, columns: Sequence[int]) -> "FeatureTable":
        columns = list(columns)
        return FeatureTable(self.values[:, columns], self.website_ids, self.visit_ids,
                            tuple(self.feature_names[j] for j in columns), self.websites)

    def restrict_websites(self, websites: Sequence[str]) -> "FeatureTable":
        labels = _unique_labels(websites)
        rows: List[int] = []
        row_labels: List[str] = []
        for website, label in zip(websites, labels):
            picked = self.rows_for(website)
            rows.extend(picked.tolist())
            row_labels.extend([label] * len(picked))
        return FeatureTable(self.values[rows], tuple(row_labels),
                            tuple(self.visit_ids[i] for i in rows), self.feature_names, tuple(labels))

    def resample_per_website(self, rng: np.random.Generator) -> "FeatureTable":
        rows: List[int] = []
        for website in self.websites:
            members = self.rows_for(website)
            if len(members):
                rows.extend(members[rng.integers(0, len(members), size=len(members))].tolist())
        return FeatureTable(self.values[rows], tuple(self.website_ids[i] for i in rows),
                            tuple(self.visit_ids[i] for i in rows), self.feature_names, self.websites)


def _unique_labels(websites: Sequence[str]) -> List[str]:
    """重复的网站名加 #k 后缀，保持每个标签唯一"""
    seen: Dict[str, int] = {}
    labels = []
    for website in websites:
        count = seen.get(website, 0)
        labels.append(website if count == 0 else f"{website}#{count}")
        seen[website] = count + 1
    return labels


class CacheEntry(SQLModel, table=True):
    """阶段产物缓存索引"""
    key: str = Field(primary_key=True)  # 输入内容与阶段配置的 SHA-256
    stage: str = Field(index=True)  # extract / analyze
    path: str
    size: int = 0
    created_at: datetime = Field(default_factory=datetime.utcnow)
