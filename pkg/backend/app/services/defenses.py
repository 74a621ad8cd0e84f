"""
BuFLO 与 Tamaraw 防御模拟

输入为 cell 形式的 trace（±1），输出同样是 cell 形式。真实 cell 按到达顺序
排队，只能在到达时间之后的同方向时隙发出（store-and-forward，不丢弃）。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.errors import DataError
from app.logger import get_logger
from app.models import INCOMING, OUTGOING, Dataset, Trace
from app.schemas import BufloParams, DefenseKind, TamarawParams
from app.traces import DEFAULT_CELL_SIZE, to_cell_sequence

logger = get_logger(__name__)

_EPS = 1e-9


def _slot_indices(arrivals: np.ndarray, period: float, offset: int = 0, stride: int = 1) -> np.ndarray:
    """
    每个真实 cell 发出时所在的时隙编号

    时隙 j 的时间是 (stride·j + offset)·period；第 i 个 cell 占用
    不早于其到达时间、且晚于第 i-1 个 cell 的第一个时隙。
    """
    if len(arrivals) == 0:
        return np.zeros(0, dtype=np.int64)
    earliest = np.ceil((arrivals / period - offset) / stride - _EPS).astype(np.int64)
    earliest = np.maximum(earliest, 0)
    order = np.arange(len(arrivals))
    return order + np.maximum.accumulate(earliest - order)


def apply_buflo(trace: Trace, params: BufloParams) -> Trace:
    """
    BuFLO：时隙 s 在 s·ρ 时刻发送一个 cell，偶数时隙上行、奇数时隙下行

    在真实 cell 全部发出且 s·ρ >= τ 的第一个时隙之后停止。
    """
    trace = to_cell_sequence(trace, params.cell_size)
    directions = trace.directions
    last_slot = -1
    for direction, offset in ((OUTGOING, 0), (INCOMING, 1)):
        slots = _slot_indices(trace.times[directions == direction], params.rho, offset, 2)
        if len(slots):
            last_slot = max(last_slot, int(2 * slots[-1] + offset))
    threshold_slot = int(np.ceil(params.tau / params.rho - _EPS))
    final = max(last_slot, threshold_slot)

    slots = np.arange(final + 1)
    lengths = np.where(slots % 2 == 0, OUTGOING, INCOMING)
    return Trace(slots * params.rho, lengths, trace.website_id, trace.visit_id)


def buflo_template(tau: float, rho: float) -> Trace:
    """τ 时长内发完的 trace 经 BuFLO 后的固定模式"""
    return apply_buflo(Trace(np.zeros(1), np.array([OUTGOING])), BufloParams(tau=tau, rho=rho))


def _padded_count(count: int, multiple: int) -> int:
    """补到 multiple 的倍数；已是倍数时不变"""
    return -(-count // multiple) * multiple


def apply_tamaraw(trace: Trace, params: TamarawParams) -> Trace:
    """
    Tamaraw：上行、下行分别以 ρ_out、ρ_in 的固定间隔发送

    每个方向一直发送到自己的真实 cell 发完、并且时钟越过任一方向最后一个
    真实 cell 的到达时间，然后把该方向的 cell 数补到 L 的倍数。
    """
    trace = to_cell_sequence(trace, params.cell_size)
    directions = trace.directions
    last_arrival = float(trace.times[-1]) if len(trace) else 0.0

    times: List[np.ndarray] = []
    lengths: List[np.ndarray] = []
    for direction, period in ((OUTGOING, params.rho_out), (INCOMING, params.rho_in)):
        slots = _slot_indices(trace.times[directions == direction], period)
        last_real = int(slots[-1]) if len(slots) else -1
        clock_slot = int(np.floor(last_arrival / period + _EPS))
        count = max(last_real, clock_slot) + 1
        count = _padded_count(count, params.L)
        times.append(np.arange(count) * period)
        lengths.append(np.full(count, direction))

    all_times = np.concatenate(times)
    all_lengths = np.concatenate(lengths)
    # 同一时刻上行在前
    order = np.lexsort((all_lengths != OUTGOING, all_times))
    return Trace(all_times[order], all_lengths[order], trace.website_id, trace.visit_id)


@dataclass(frozen=True)
class OverheadRow:
    """单条 trace 的防御开销"""
    website_id: str
    visit_id: str
    real_cells: int
    defended_cells: int
    bandwidth_overhead: float  # 防御后 cell 数 / 真实 cell 数
    latency_overhead: float  # 防御后时长 / 原时长，原时长为 0 时为 nan


def _overhead(original: Trace, defended: Trace) -> OverheadRow:
    real = len(original)
    latency = defended.duration / original.duration if original.duration > 0 else float("nan")
    return OverheadRow(original.website_id, original.visit_id, real, len(defended),
                       len(defended) / real if real else float("nan"), latency)


def defend_trace(trace: Trace, kind: DefenseKind, params: Union[BufloParams, TamarawParams]) -> Trace:
    if kind == DefenseKind.BUFLO:
        if not isinstance(params, BufloParams):
            raise DataError("BuFLO needs BufloParams")
        return apply_buflo(trace, params)
    if not isinstance(params, TamarawParams):
        raise DataError("Tamaraw needs TamarawParams")
    return apply_tamaraw(trace, params)


def defend_dataset(dataset: Dataset, kind: DefenseKind, params: Union[BufloParams, TamarawParams],
                   cell_size: int = DEFAULT_CELL_SIZE, threads: int = 1
                   ) -> Tuple[Dataset, List[OverheadRow]]:
    """对数据集中每条 trace 应用防御，返回防御后的数据集与开销明细"""
    cells = [to_cell_sequence(t, cell_size) for t in dataset.traces]

    def run(trace: Trace) -> Trace:
        return defend_trace(trace, kind, params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            defended = list(pool.map(run, cells))
    else:
        defended = [run(t) for t in cells]

    rows = [_overhead(o, d) for o, d in zip(cells, defended)]
    real = sum(r.real_cells for r in rows)
    padded = sum(r.defended_cells for r in rows)
    logger.info(f"{kind.value} 防御完成: {len(defended)} 条 trace, 带宽开销 {padded / max(real, 1):.3f}x")
    return Dataset(tuple(defended), dataset.websites, dataset.report), rows


def overhead_summary(rows: Sequence[OverheadRow]) -> Tuple[float, float]:
    """(总带宽开销, 平均时延开销)"""
    real = sum(r.real_cells for r in rows)
    padded = sum(r.defended_cells for r in rows)
    latencies = [r.latency_overhead for r in rows if np.isfinite(r.latency_overhead)]
    return (padded / real if real else float("nan"),
            float(np.mean(latencies)) if latencies else float("nan"))
