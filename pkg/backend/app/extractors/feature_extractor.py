"""
特征提取主入口：把 14 个类别拼成 3043 维向量，并读写特征 CSV
"""
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from tqdm import tqdm

from app.errors import DataError
from app.extractors.count_extractor import burst_features, packet_count_features
from app.extractors.interval_extractor import interval_features, packet_distribution_features
from app.extractors.layout import (
    CATEGORY_RANGES,
    CATEGORY_SIZES,
    FEATURE_COUNT,
    CategoryId,
    feature_names,
    layout_map,
)
from app.extractors.ordering_extractor import all_ngram_features, cumul_features
from app.extractors.timing_extractor import time_and_rate_features
from app.logger import get_logger
from app.models import Dataset, FeatureTable, Trace

logger = get_logger(__name__)

ID_COLUMNS = ("website_id", "visit_id")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """一条 trace 的指纹"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (FEATURE_COUNT,):
            raise DataError(f"feature vector must have {FEATURE_COUNT} values, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def layout(self) -> Dict[CategoryId, tuple]:
        return CATEGORY_RANGES

    def category(self, category: CategoryId) -> np.ndarray:
        """某个类别的特征块"""
        start, stop = CATEGORY_RANGES[category]
        return self.values[start:stop]


def extract_features(trace: Trace) -> FeatureVector:
    """
    提取 3043 维特征向量（trace 需已是 cell 形式）

    Raises:
        DataError: trace 为空
    """
    if len(trace) == 0:
        raise DataError("cannot extract features from an empty trace")

    blocks: Dict[CategoryId, np.ndarray] = {
        CategoryId.PACKET_COUNT: packet_count_features(trace),
        CategoryId.NGRAM: all_ngram_features(trace),
        CategoryId.INTERVAL_I: interval_features(trace, "I"),
        CategoryId.INTERVAL_II: interval_features(trace, "II"),
        CategoryId.INTERVAL_III: interval_features(trace, "III"),
        CategoryId.PACKET_DISTRIBUTION: packet_distribution_features(trace),
        CategoryId.BURST: burst_features(trace),
        CategoryId.CUMUL: cumul_features(trace),
    }
    blocks.update(time_and_rate_features(trace))

    for category in CategoryId:
        if len(blocks[category]) != CATEGORY_SIZES[category]:
            raise AssertionError(f"category {category.name} produced {len(blocks[category])} values")
    values = np.concatenate([blocks[category] for category in CategoryId])
    if not np.all(np.isfinite(values)):
        raise DataError(f"non-finite feature value in trace {trace.website_id}/{trace.visit_id}")
    return FeatureVector(values)


def feature_table(dataset: Dataset, threads: int = 1, progress: bool = False) -> FeatureTable:
    """对数据集中每条 trace 提取特征，行顺序与 dataset.traces 一致"""
    logger.info(f"开始提取特征: {len(dataset)} 条 trace, {threads} 个线程")
    traces = list(dataset.traces)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(tqdm(pool.map(extract_features, traces), total=len(traces),
                                disable=not progress, desc="extract"))
    else:
        vectors = [extract_features(t) for t in tqdm(traces, disable=not progress, desc="extract")]

    values = np.vstack([v.values for v in vectors]) if vectors else np.zeros((0, FEATURE_COUNT))
    logger.info(f"特征提取完成: {values.shape[0]} 行 x {values.shape[1]} 列")
    return FeatureTable(
        values,
        tuple(t.website_id for t in traces),
        tuple(t.visit_id for t in traces),
        tuple(feature_names()),
        dataset.websites,
    )


def write_feature_csv(table: FeatureTable, path: Union[str, Path]) -> Path:
    """写出特征 CSV：前两列是 website_id、visit_id，浮点数用 repr 保证可逆"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(list(ID_COLUMNS) + list(table.feature_names))
        for i in range(table.n_rows):
            writer.writerow([table.website_ids[i], table.visit_ids[i]]
                            + [repr(float(x)) for x in table.values[i]])
    return path


def read_feature_csv(path: Union[str, Path]) -> FeatureTable:
    """
    读取 write_feature_csv 写出的文件

    网站顺序取首次出现的顺序。

    Raises:
        DataError: 文件缺失、表头错误或数值无法解析
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"feature file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header[:2]) != ID_COLUMNS:
            raise DataError(f"{path}: header must start with {', '.join(ID_COLUMNS)}")
        names = header[2:]
        website_ids: List[str] = []
        visit_ids: List[str] = []
        rows: List[List[float]] = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path} row {row_number}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(x) for x in row[2:]])
            except ValueError as e:
                raise DataError(f"{path} row {row_number}: {e}")
            website_ids.append(row[0])
            visit_ids.append(row[1])

    values = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return FeatureTable(values, tuple(website_ids), tuple(visit_ids), tuple(names))


def write_layout_json(path: Union[str, Path]) -> Path:
    """写出类别布局的 JSON 伴随文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(layout_map(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
