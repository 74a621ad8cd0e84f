"""计数类特征：包数、burst、首尾包"""
from typing import List, Tuple

import numpy as np

from app.models import INCOMING, OUTGOING, Trace

ROUNDING_GRANULARITY = 25
FIRST_PACKETS = 20
HEAD_TAIL_WINDOW = 30
BURST_THRESHOLDS = (5, 10, 20)


def round_count(count: float, granularity: int = ROUNDING_GRANULARITY) -> float:
    """四舍五入到 granularity 的整数倍（.5 向上）"""
    return float(np.floor(count / granularity + 0.5) * granularity)


def packet_count_features(trace: Trace) -> np.ndarray:
    """
    包数特征（13 个）

    [总数, 下行数, 上行数, 下行占比, 上行占比,
     取整总数, 取整下行数, 取整上行数,
     总字节, 下行字节, 上行字节, 下行字节占比, 上行字节占比]
    """
    directions = trace.directions
    sizes = np.abs(trace.lengths)
    total = float(len(directions))
    n_in = float(np.sum(directions == INCOMING))
    n_out = float(np.sum(directions == OUTGOING))
    size_total = float(np.sum(sizes))
    size_in = float(np.sum(sizes[directions == INCOMING]))
    size_out = float(np.sum(sizes[directions == OUTGOING]))
    return np.array([
        total, n_in, n_out,
        n_in / total if total else 0.0,
        n_out / total if total else 0.0,
        round_count(total), round_count(n_in), round_count(n_out),
        size_total, size_in, size_out,
        size_in / size_total if size_total else 0.0,
        size_out / size_total if size_total else 0.0,
    ])


def _bursts(directions: np.ndarray, direction: int) -> Tuple[List[int], List[int]]:
    """
    按“两个相邻的反方向包”切分序列

    返回每个 burst 中 direction 方向的包数以及 burst 起始下标。
    """
    other = -direction
    sizes: List[int] = []
    starts: List[int] = []
    count = 0
    start = -1
    for i, d in enumerate(directions):
        if d == other and i > 0 and directions[i - 1] == other:
            if count:
                sizes.append(count)
                starts.append(start)
            count = 0
            continue
        if d == direction:
            if count == 0:
                start = i
            count += 1
    if count:
        sizes.append(count)
        starts.append(start)
    return sizes, starts


def burst_features(trace: Trace) -> np.ndarray:
    """
    上行 burst 特征（11 个）

    [最大, 平均, 个数, >5 个数, >10 个数, >20 个数,
     标准差, 中位数, 最小, 下行 burst 个数, 相邻上行 burst 起始时间间隔均值]
    """
    directions = trace.directions
    sizes, starts = _bursts(directions, OUTGOING)
    incoming_sizes, _ = _bursts(directions, INCOMING)
    if not sizes:
        return np.array([0.0] * 9 + [float(len(incoming_sizes)), 0.0])
    lengths = np.asarray(sizes, dtype=float)
    start_times = trace.times[starts]
    gap = float(np.mean(np.diff(start_times))) if len(start_times) > 1 else 0.0
    return np.array([
        float(lengths.max()),
        float(lengths.mean()),
        float(len(lengths)),
        *(float(np.sum(lengths > t)) for t in BURST_THRESHOLDS),
        float(lengths.std()),
        float(np.median(lengths)),
        float(lengths.min()),
        float(len(incoming_sizes)),
        gap,
    ])


def first20_features(trace: Trace) -> np.ndarray:
    """前 20 个包的方向，不足补 0"""
    out = np.zeros(FIRST_PACKETS)
    head = trace.directions[:FIRST_PACKETS]
    out[:len(head)] = head
    return out


def first30_features(trace: Trace) -> np.ndarray:
    """前 30 个包中的 [下行数, 上行数]"""
    head = trace.directions[:HEAD_TAIL_WINDOW]
    return np.array([float(np.sum(head == INCOMING)), float(np.sum(head == OUTGOING))])


def last30_features(trace: Trace) -> np.ndarray:
    """后 30 个包中的 [下行数, 上行数]"""
    tail = trace.directions[-HEAD_TAIL_WINDOW:]
    return np.array([float(np.sum(tail == INCOMING)), float(np.sum(tail == OUTGOING))])
