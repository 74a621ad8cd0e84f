"""
interval 与包分布特征

interval 是同方向相邻两个包之间的窗口，大小为两者之间的包数。
"""
import numpy as np

from app.models import INCOMING, OUTGOING, Trace

INTERVAL_SLOTS = 300
# Interval-III 合并的 bin 区间（含两端）
INTERVAL_GROUPS = ((3, 5), (6, 8), (9, 13))
CHUNK_SIZE = 30
CHUNK_COUNT = 200
SUBSET_COUNT = 20


def interval_sizes(trace: Trace, direction: int) -> np.ndarray:
    """某个方向上每个 interval 的大小"""
    positions = np.flatnonzero(trace.directions == direction)
    return np.diff(positions) - 1


def interval_i(trace: Trace) -> np.ndarray:
    """前 300 个下行 interval 与前 300 个上行 interval 的大小，不足补 0（600 个）"""
    blocks = []
    for direction in (INCOMING, OUTGOING):
        sizes = interval_sizes(trace, direction)[:INTERVAL_SLOTS]
        block = np.zeros(INTERVAL_SLOTS)
        block[:len(sizes)] = sizes
        blocks.append(block)
    return np.concatenate(blocks)


def interval_histogram(sizes: np.ndarray) -> np.ndarray:
    """大小 0..299 的直方图，>= 299 的计入最后一个 bin"""
    clamped = np.minimum(sizes, INTERVAL_SLOTS - 1)
    return np.bincount(clamped, minlength=INTERVAL_SLOTS).astype(float)


def interval_ii(trace: Trace) -> np.ndarray:
    """下行、上行 interval 直方图各 300 维，加上两方向的 interval 总数（602 个）"""
    sizes = {d: interval_sizes(trace, d) for d in (INCOMING, OUTGOING)}
    return np.concatenate([
        interval_histogram(sizes[INCOMING]),
        interval_histogram(sizes[OUTGOING]),
        np.array([float(len(sizes[INCOMING])), float(len(sizes[OUTGOING]))]),
    ])


def grouped_histogram(sizes: np.ndarray) -> np.ndarray:
    """
    大小 0..299 的直方图（不截断），bin 3–5、6–8、9–13 各合并为一个和（292 个）
    """
    inside = sizes[sizes < INTERVAL_SLOTS]
    histogram = np.bincount(inside, minlength=INTERVAL_SLOTS).astype(float)
    head = histogram[:INTERVAL_GROUPS[0][0]]
    grouped = [histogram[low:high + 1].sum() for low, high in INTERVAL_GROUPS]
    tail = histogram[INTERVAL_GROUPS[-1][1] + 1:]
    return np.concatenate([head, np.asarray(grouped), tail])


def interval_iii(trace: Trace) -> np.ndarray:
    """分组直方图（每方向 292 个）加两方向大小 >= 300 的 interval 数（586 个）"""
    sizes = {d: interval_sizes(trace, d) for d in (INCOMING, OUTGOING)}
    overflow = [float(np.sum(sizes[d] >= INTERVAL_SLOTS)) for d in (INCOMING, OUTGOING)]
    return np.concatenate([
        grouped_histogram(sizes[INCOMING]),
        grouped_histogram(sizes[OUTGOING]),
        np.asarray(overflow),
    ])


INTERVAL_VARIANTS = {"I": interval_i, "II": interval_ii, "III": interval_iii}


def interval_features(trace: Trace, variant: str) -> np.ndarray:
    """按变体名（I / II / III）计算 interval 特征"""
    try:
        return INTERVAL_VARIANTS[variant](trace)
    except KeyError:
        raise ValueError(f"unknown interval variant {variant!r}")


def chunk_counts(trace: Trace) -> np.ndarray:
    """每 30 个包一块，前 200 块中的上行包数，不足补 0"""
    outgoing = (trace.directions == OUTGOING)[:CHUNK_SIZE * CHUNK_COUNT].astype(float)
    padded = np.zeros(CHUNK_SIZE * CHUNK_COUNT)
    padded[:len(outgoing)] = outgoing
    return padded.reshape(CHUNK_COUNT, CHUNK_SIZE).sum(axis=1)


def packet_distribution_features(trace: Trace) -> np.ndarray:
    """
    包分布特征（225 个）

    200 个块计数，[标准差, 均值, 中位数, 最大值]，20 个子集和，总和。
    """
    counts = chunk_counts(trace)
    stats = [float(counts.std()), float(counts.mean()), float(np.median(counts)), float(counts.max())]
    subsets = counts.reshape(SUBSET_COUNT, -1).sum(axis=1)
    return np.concatenate([counts, np.asarray(stats), subsets, np.array([counts.sum()])])
