"""时间与速率特征"""
from typing import Dict

import numpy as np

from app.extractors.count_extractor import first20_features, first30_features, last30_features
from app.extractors.layout import CategoryId
from app.extractors.ordering_extractor import transposition_features
from app.models import INCOMING, OUTGOING, Trace

SECONDS = 100
SECOND_SUBSETS = 20
QUARTILES = (25.0, 50.0, 75.0, 100.0)


def _streams(trace: Trace) -> Dict[str, np.ndarray]:
    directions = trace.directions
    return {
        "total": trace.times,
        "in": trace.times[directions == INCOMING],
        "out": trace.times[directions == OUTGOING],
    }


def inter_arrival_stats(times: np.ndarray) -> np.ndarray:
    """[最大, 平均, 标准差, 第三四分位]；少于两个包时全 0"""
    if len(times) < 2:
        return np.zeros(4)
    gaps = np.diff(times)
    return np.array([gaps.max(), gaps.mean(), gaps.std(), np.percentile(gaps, 75)])


def transmission_quartiles(times: np.ndarray) -> np.ndarray:
    """时间戳的 25/50/75/100% 分位（线性插值）；空流全 0"""
    if len(times) == 0:
        return np.zeros(len(QUARTILES))
    return np.percentile(times, QUARTILES)


def time_features(trace: Trace) -> np.ndarray:
    """时间统计（24 个）：三条流的间隔统计，再是三条流的传输时间分位"""
    streams = _streams(trace)
    gaps = [inter_arrival_stats(times) for times in streams.values()]
    quartiles = [transmission_quartiles(times) for times in streams.values()]
    return np.concatenate(gaps + quartiles)


def packets_per_second(trace: Trace) -> np.ndarray:
    """
    每秒包数特征（126 个）

    前 100 秒每秒的包数（不足补 0），[标准差, 均值, 中位数, 最小, 最大]，
    每 5 秒一组的 20 个和，以及覆盖的秒数。
    """
    seconds = np.floor(trace.times).astype(np.int64)
    counts = np.bincount(seconds[seconds < SECONDS], minlength=SECONDS).astype(float)
    stats = [counts.std(), counts.mean(), np.median(counts), counts.min(), counts.max()]
    subsets = counts.reshape(SECOND_SUBSETS, -1).sum(axis=1)
    spanned = float(seconds[-1] + 1) if len(seconds) else 0.0
    return np.concatenate([counts, np.asarray(stats, dtype=float), subsets, np.array([spanned])])


def time_and_rate_features(trace: Trace) -> Dict[CategoryId, np.ndarray]:
    """时间、每秒包数、首尾包与 transposition 六个类别"""
    return {
        CategoryId.TIME: time_features(trace),
        CategoryId.PACKETS_PER_SECOND: packets_per_second(trace),
        CategoryId.FIRST20: first20_features(trace),
        CategoryId.FIRST30: first30_features(trace),
        CategoryId.LAST30: last30_features(trace),
        CategoryId.TRANSPOSITION: transposition_features(trace),
    }
