"""
熵与互信息

包含精确离散互信息（测试用的 oracle）、特征之间的 Kvalseth 归一化互信息
NMI_max = I(c; r) / max{H(c), H(r)}，以及 NMI 矩阵。
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from app.errors import DataError
from app.logger import get_logger
from app.services.density import fit_akde, logpdf

logger = get_logger(__name__)

MAX_BINS = 30
PROBABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """有限支撑上的概率分布"""
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if len(p) == 0:
            raise DataError("distribution needs a non-empty support")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DataError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise DataError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __len__(self) -> int:
        return len(self.probabilities)

    @classmethod
    def from_counts(cls, counts: Sequence[float]) -> "DiscreteDistribution":
        c = np.asarray(counts, dtype=float)
        if c.sum() <= 0:
            raise DataError("counts must have a positive total")
        return cls(c / c.sum())

    @classmethod
    def uniform(cls, n: int) -> "DiscreteDistribution":
        if n < 1:
            raise DataError("uniform distribution needs n >= 1")
        return cls(np.full(n, 1.0 / n))


def _entropy_bits(p: np.ndarray) -> float:
    nonzero = p[p > 0]
    return float(-np.sum(nonzero * np.log2(nonzero)))


def entropy(dist: Union[DiscreteDistribution, Sequence[float]]) -> float:
    """香农熵（比特），0·log0 记为 0"""
    if not isinstance(dist, DiscreteDistribution):
        dist = DiscreteDistribution(np.asarray(dist, dtype=float))
    return _entropy_bits(dist.probabilities)


def exact_mi(joint: Union[np.ndarray, Sequence[Sequence[float]]]) -> float:
    """
    联合分布表的精确互信息（比特）

    行是类别（网站），列是特征取值：
    I = H(行边缘) - Σ_f p(f)·H(行 | f)
    """
    table = np.asarray(joint, dtype=float)
    if table.ndim != 2 or table.size == 0:
        raise DataError("joint distribution must be a non-empty 2-d table")
    DiscreteDistribution(table.reshape(-1))
    rows = table.sum(axis=1)
    conditional = 0.0
    for column in table.T:
        mass = column.sum()
        if mass > 0:
            conditional += mass * _entropy_bits(column / mass)
    return max(0.0, _entropy_bits(rows) - conditional)


def discretize(values: Sequence[float], max_bins: int = MAX_BINS) -> Tuple[np.ndarray, int]:
    """
    把样本编码成整数

    不超过 max_bins 个不同取值时直接编码；否则按秩分位分箱，
    箱数 B = min(⌈√m⌉, max_bins)，编码为 ⌊(rank - 1)·B/m⌋（rank 取 min）。

    Returns:
        (编码, 编码个数)
    """
    x = np.asarray(values, dtype=float)
    distinct, codes = np.unique(x, return_inverse=True)
    if len(distinct) <= max_bins:
        return codes.astype(np.int64), len(distinct)
    m = len(x)
    bins = min(int(np.ceil(np.sqrt(m))), max_bins)
    ranks = rankdata(x, method="min")
    codes = np.floor((ranks - 1) * bins / m).astype(np.int64)
    return codes, bins


class NmiValue(NamedTuple):
    value: float
    degenerate: bool  # 至少一方为常量


def _nmi_from_codes(cx: np.ndarray, nx: int, cy: np.ndarray, ny: int) -> NmiValue:
    m = len(cx)
    hx = _entropy_bits(np.bincount(cx, minlength=nx) / m)
    hy = _entropy_bits(np.bincount(cy, minlength=ny) / m)
    if hx == 0 or hy == 0:
        return NmiValue(0.0, True)
    hxy = _entropy_bits(np.bincount(cx * ny + cy, minlength=nx * ny) / m)
    mi = hx + hy - hxy
    return NmiValue(float(min(1.0, max(0.0, mi / max(hx, hy)))), False)


def nmi_max(x_samples: Sequence[float], y_samples: Sequence[float]) -> NmiValue:
    """
    两个特征的 NMI_max

    Raises:
        DataError: 长度不同或少于 2 个样本
    """
    x = np.asarray(x_samples, dtype=float)
    y = np.asarray(y_samples, dtype=float)
    if len(x) != len(y):
        raise DataError(f"sample lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DataError("nmi_max needs at least 2 samples")
    cx, nx = discretize(x)
    cy, ny = discretize(y)
    return _nmi_from_codes(cx, nx, cy, ny)


def kde_mutual_information(x_samples: Sequence[float], y_samples: Sequence[float],
                           beta: int = 10) -> float:
    """
    用 AKDE 估计 I(X; Y)（比特），用于和分箱估计交叉检查

    前一半样本拟合，后一半样本上取 log p(x,y) - log p(x) - log p(y) 的均值。
    """
    x = np.asarray(x_samples, dtype=float)
    y = np.asarray(y_samples, dtype=float)
    if len(x) != len(y) or len(x) < 4:
        raise DataError("kde_mutual_information needs equal-length samples (at least 4)")
    half = len(x) // 2
    joint = np.column_stack([x, y])
    model_xy = fit_akde(joint[:half], beta=beta)
    model_x = fit_akde(x[:half], beta=beta)
    model_y = fit_akde(y[:half], beta=beta)
    held = joint[half:]
    ratio = logpdf(model_xy, held) - logpdf(model_x, held[:, 0]) - logpdf(model_y, held[:, 1])
    return max(0.0, float(np.mean(ratio)) / np.log(2))


@dataclass(frozen=True, eq=False)
class NmiMatrix:
    """特征两两之间的 NMI；distance = 1 - values"""
    values: np.ndarray
    names: Tuple[str, ...]
    degenerate: Tuple[bool, ...]

    @property
    def distance(self) -> np.ndarray:
        return 1.0 - self.values

    def value(self, i: int, j: int) -> float:
        return float(self.values[i, j])


class LazyNmi:
    """
    按需计算并缓存 NMI

    剪枝只需要候选特征与已保留特征之间的值，不必算出完整矩阵。
    """

    def __init__(self, matrix: np.ndarray, names: Optional[Sequence[str]] = None):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 2:
            raise DataError("NMI needs a traces x features matrix with at least 2 traces")
        self.names = tuple(names) if names is not None else tuple(
            str(j) for j in range(self.matrix.shape[1]))
        self._codes: Dict[int, Tuple[np.ndarray, int]] = {}
        self._pairs: Dict[Tuple[int, int], NmiValue] = {}

    def codes(self, j: int) -> Tuple[np.ndarray, int]:
        if j not in self._codes:
            self._codes[j] = discretize(self.matrix[:, j])
        return self._codes[j]

    def is_constant(self, j: int) -> bool:
        return self.codes(j)[1] <= 1

    def pair(self, i: int, j: int) -> NmiValue:
        key = (min(i, j), max(i, j))
        if key not in self._pairs:
            cx, nx = self.codes(key[0])
            cy, ny = self.codes(key[1])
            self._pairs[key] = _nmi_from_codes(cx, nx, cy, ny)
        return self._pairs[key]

    def value(self, i: int, j: int) -> float:
        return self.pair(i, j).value

    def submatrix(self, columns: Sequence[int], threads: int = 1) -> NmiMatrix:
        """给定列的完整 NMI 矩阵（对称，每对只算一次）"""
        columns = list(columns)
        k = len(columns)
        for j in columns:
            self.codes(j)
        pairs = [(a, b) for a in range(k) for b in range(a, k)]

        def compute(pair: Tuple[int, int]) -> NmiValue:
            a, b = pair
            return self.pair(columns[a], columns[b])

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(compute, pairs))
        else:
            results = [compute(p) for p in pairs]

        values = np.zeros((k, k))
        for (a, b), result in zip(pairs, results):
            values[a, b] = values[b, a] = result.value
        degenerate = tuple(self.is_constant(j) for j in columns)
        return NmiMatrix(values, tuple(self.names[j] for j in columns), degenerate)


def nmi_matrix(feature_matrix: np.ndarray, names: Optional[Sequence[str]] = None,
               threads: int = 1) -> NmiMatrix:
    """
    traces × features 矩阵的 NMI 矩阵

    常量特征与所有特征（包括自身）的 NMI 为 0，并在 degenerate 中标记。
    """
    lazy = LazyNmi(feature_matrix, names)
    return lazy.submatrix(range(lazy.matrix.shape[1]), threads)


def write_nmi_csv(matrix: NmiMatrix, path: Union[str, Path]) -> Path:
    """NMI 矩阵导出为带特征名表头的 CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["feature"] + list(matrix.names))
        for name, row in zip(matrix.names, matrix.values):
            writer.writerow([name] + [repr(float(v)) for v in row])
    return path
