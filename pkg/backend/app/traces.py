"""trace 文件解析、数据集加载与 cell 归一化"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from app.errors import DataError, DatasetError, TraceFormatError
from app.logger import get_logger
from app.models import Dataset, LoadReport, Trace

logger = get_logger(__name__)

TRACE_SUFFIX = ".trace"
DEFAULT_CELL_SIZE = 512


def parse_trace(text: str, website_id: str = "", visit_id: str = "") -> Trace:
    """
    解析一次访问的 trace 文本

    每个非空行是 `<time>\\t<signed length>`，`#` 开头的行是注释。
    时间平移到首包为 0；时间相同的包保持文件中的顺序。

    Raises:
        TraceFormatError: 格式错误（带行号）、零长度包、时间递减或没有数据包
    """
    times: List[float] = []
    lengths: List[int] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise TraceFormatError("expected '<time>\\t<length>'", line_number)
        try:
            time = float(fields[0])
        except ValueError:
            raise TraceFormatError(f"invalid time {fields[0]!r}", line_number)
        try:
            length = int(fields[1])
        except ValueError:
            raise TraceFormatError(f"invalid length {fields[1]!r}", line_number)
        if not np.isfinite(time):
            raise TraceFormatError("time must be finite", line_number)
        if length == 0:
            raise TraceFormatError("zero-length packet", line_number)
        if times and time < times[-1]:
            raise TraceFormatError("decreasing timestamp", line_number)
        times.append(time)
        lengths.append(length)

    if not times:
        raise TraceFormatError("trace contains no packets")
    origin = times[0]
    return Trace(np.asarray(times) - origin, np.asarray(lengths, dtype=np.int64),
                 website_id, visit_id)


def serialize_trace(trace: Trace) -> str:
    """trace 写回文本格式（parse_trace 的逆）"""
    return "".join(f"{float(t)!r}\t{int(l)}\n" for t, l in zip(trace.times, trace.lengths))


def read_trace(path: Union[str, Path], website_id: str = "", visit_id: str = "") -> Trace:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_trace(text, website_id or path.parent.name, visit_id or path.stem)


def _load_one(path: Path) -> Tuple[Path, Optional[Trace], Optional[str]]:
    try:
        return path, read_trace(path), None
    except (OSError, UnicodeDecodeError, DataError) as e:
        return path, None, str(e)


def load_dataset(root_path: Union[str, Path], threads: int = 1) -> Dataset:
    """
    加载 `root/<website_id>/<visit_id>.trace` 布局的数据集

    网站按字典序排列，每个网站内的访问按 visit_id 字典序排列；
    无法解析的文件跳过并记入报告，没有有效 trace 的网站被排除。

    Args:
        root_path: 数据集根目录
        threads: 并行读取文件的线程数（结果顺序与调度无关）

    Raises:
        DatasetError: 根目录不存在、为空或没有任何有效 trace
    """
    root = Path(root_path)
    if not root.is_dir():
        raise DatasetError(f"dataset root not found: {root}")

    site_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    files: List[Path] = []
    for site_dir in site_dirs:
        files.extend(sorted(site_dir.glob(f"*{TRACE_SUFFIX}"), key=lambda p: p.stem))
    if not files:
        raise DatasetError(f"no trace files under {root}")

    # 按文件列表顺序收集结果，保证确定性
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_load_one, files))
    else:
        results = [_load_one(path) for path in files]

    traces: List[Trace] = []
    skipped: List[Tuple[str, str]] = []
    for path, trace, error in results:
        if trace is None:
            logger.warning(f"跳过无法解析的文件 {path}: {error}")
            skipped.append((str(path.relative_to(root)), error))
        else:
            traces.append(trace)

    present = {t.website_id for t in traces}
    websites = [d.name for d in site_dirs if d.name in present]
    excluded = [d.name for d in site_dirs if d.name not in present]
    for website in excluded:
        logger.warning(f"网站 {website} 没有有效 trace，已排除")
    if not websites:
        raise DatasetError(f"no valid traces under {root}")

    logger.info(f"加载数据集 {root}: {len(websites)} 个网站, {len(traces)} 条 trace, 跳过 {len(skipped)} 个文件")
    return Dataset(tuple(traces), tuple(websites), LoadReport(tuple(skipped), tuple(excluded)))


def write_dataset(dataset: Dataset, root_path: Union[str, Path]) -> Path:
    """按 load_dataset 的目录布局写出数据集"""
    root = Path(root_path)
    for website, traces in dataset.by_website().items():
        site_dir = root / website
        site_dir.mkdir(parents=True, exist_ok=True)
        for trace in traces:
            (site_dir / f"{trace.visit_id}{TRACE_SUFFIX}").write_text(
                serialize_trace(trace), encoding="utf-8")
    return root


def to_cell_sequence(trace: Trace, cell_size: int = DEFAULT_CELL_SIZE) -> Trace:
    """
    把字节长度的数据包展开成 ±1 的 cell 记录

    长度为 |l| 的包变成 ⌈|l|/cell_size⌉ 个同时间、同方向的单位包；
    已经是 ±1 序列的 trace 原样返回。
    """
    if cell_size <= 0:
        raise DataError("cell_size must be positive")
    magnitudes = np.abs(trace.lengths)
    if np.all(magnitudes == 1):
        return trace
    repeats = -(-magnitudes // cell_size)  # 向上取整
    times = np.repeat(trace.times, repeats)
    lengths = np.repeat(np.sign(trace.lengths), repeats)
    return Trace(times, lengths, trace.website_id, trace.visit_id)


def cell_dataset(dataset: Dataset, cell_size: int = DEFAULT_CELL_SIZE) -> Dataset:
    return Dataset(tuple(to_cell_sequence(t, cell_size) for t in dataset.traces),
                   dataset.websites, dataset.report)
