"""包顺序特征：n-gram、transposition 与 CUMUL"""
import itertools
from typing import List, Tuple

import numpy as np

from app.models import INCOMING, OUTGOING, Trace

NGRAM_ORDERS = (2, 3, 4, 5, 6)
TRANSPOSITION_PACKETS = 300
CUMUL_POINTS = 100


def ngram_keys(n: int) -> List[Tuple[int, ...]]:
    """n-gram 的固定顺序（-1 排在 +1 前面）"""
    return list(itertools.product((OUTGOING, INCOMING), repeat=n))


def ngram_features(trace: Trace, n: int) -> np.ndarray:
    """
    方向 n-gram 的频数，长度 2^n，按 ngram_keys(n) 的顺序

    trace 短于 n 时返回全 0。
    """
    if n < 1:
        raise ValueError("n must be positive")
    counts = np.zeros(2 ** n)
    bits = (trace.directions == INCOMING).astype(np.int64)
    if len(bits) < n:
        return counts
    windows = np.lib.stride_tricks.sliding_window_view(bits, n)
    codes = windows @ (2 ** np.arange(n - 1, -1, -1))
    counts += np.bincount(codes, minlength=2 ** n)
    return counts


def all_ngram_features(trace: Trace) -> np.ndarray:
    """n = 2..6 的 n-gram 拼接（124 个）"""
    return np.concatenate([ngram_features(trace, n) for n in NGRAM_ORDERS])


def transposition_features(trace: Trace) -> np.ndarray:
    """
    前 300 个下行包、前 300 个上行包之前各有多少个包（604 个）

    后 4 个为下行位置的均值、标准差和上行位置的均值、标准差。
    """
    directions = trace.directions
    blocks = []
    stats = []
    for direction in (INCOMING, OUTGOING):
        positions = np.flatnonzero(directions == direction)[:TRANSPOSITION_PACKETS].astype(float)
        block = np.zeros(TRANSPOSITION_PACKETS)
        block[:len(positions)] = positions
        blocks.append(block)
        if len(positions):
            stats.extend([float(positions.mean()), float(positions.std())])
        else:
            stats.extend([0.0, 0.0])
    return np.concatenate(blocks + [np.asarray(stats)])


def cumul_features(trace: Trace, n_points: int = CUMUL_POINTS) -> np.ndarray:
    """
    CUMUL 特征（n_points + 4 个）

    带符号长度的累积和按包序号做分段线性插值，在 n_points 个等距点上采样；
    末尾追加 [下行包数, 上行包数, 下行长度和, 上行长度和]。
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    lengths = trace.lengths.astype(float)
    cumulative = np.cumsum(lengths)
    index = np.arange(len(cumulative), dtype=float)
    samples = np.interp(np.linspace(0.0, index[-1], n_points), index, cumulative)
    directions = trace.directions
    summary = [
        float(np.sum(directions == INCOMING)),
        float(np.sum(directions == OUTGOING)),
        float(np.sum(np.abs(lengths[directions == INCOMING]))),
        float(np.sum(np.abs(lengths[directions == OUTGOING]))),
    ]
    return np.concatenate([samples, np.asarray(summary)])
