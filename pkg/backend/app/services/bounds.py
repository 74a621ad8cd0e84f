"""
分类准确率与信息泄露之间的闭式界

准确率为 α 的分类器在 n 个网站上对应的泄露区间：
  max = H(D) + α·log2 α + (1-α)·log2(1-α)
  min = H(D) + α·log2 α + (1-α)·log2((1-α)/(n-1))
区间宽度 (1-α)·log2(n-1) 与先验无关。H(D) 取先验的熵。
"""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from app.errors import DataError
from app.services.infotheory import DiscreteDistribution, entropy


class LeakageBounds(NamedTuple):
    min_bits: float
    max_bits: float


def _xlog2(x: float) -> float:
    """x·log2 x，0 处取 0"""
    return 0.0 if x == 0 else x * np.log2(x)


def _check(n: int, alpha: float) -> None:
    if n < 2:
        raise DataError("world size n must be at least 2")
    if not 0.0 <= alpha <= 1.0:
        raise DataError("accuracy must lie in [0, 1]")


def uncertainty_range(n: int, alpha: float) -> float:
    """不确定区间宽度 (1-α)·log2(n-1)（比特）"""
    _check(n, alpha)
    return (1.0 - alpha) * float(np.log2(n - 1))


def leakage_bounds(prior: DiscreteDistribution, alpha: float) -> LeakageBounds:
    """
    准确率 α 对应的最小、最大泄露

    不做截断，max - min 恒等于 uncertainty_range(n, α)。
    """
    if not isinstance(prior, DiscreteDistribution):
        prior = DiscreteDistribution(np.asarray(prior, dtype=float))
    n = len(prior)
    _check(n, alpha)
    h = entropy(prior)
    common = h + _xlog2(alpha)
    miss = 1.0 - alpha
    upper = common + _xlog2(miss)
    lower = common + (miss * np.log2(miss / (n - 1)) if miss > 0 else 0.0)
    return LeakageBounds(float(lower), float(upper))


@dataclass(frozen=True, eq=False)
class AccuracyBound:
    """某个准确率下的泄露区间"""
    n: int
    alpha: float
    prior: DiscreteDistribution

    def __post_init__(self):
        _check(self.n, self.alpha)
        if len(self.prior) != self.n:
            raise DataError("prior size does not match n")

    @property
    def range_bits(self) -> float:
        return uncertainty_range(self.n, self.alpha)

    @property
    def bounds(self) -> LeakageBounds:
        return leakage_bounds(self.prior, self.alpha)


def combine_disjoint_worlds(leakages: Sequence[float]) -> float:
    """
    x 个大小相同、互不相交的 closed world 合并后的泄露：各自泄露的平均值

    Raises:
        DataError: 列表为空
    """
    values = [float(v) for v in leakages]
    if not values:
        raise DataError("need at least one leakage value")
    return float(np.mean(values))


def world_entropy(n: int) -> float:
    """n 个等先验网站的熵上限 log2 n"""
    if n < 1:
        raise DataError("world size must be positive")
    return float(np.log2(n))


def default_alphas() -> np.ndarray:
    return np.round(np.arange(1, 101) / 100.0, 2)


def alpha_sweep(n: int, prior: Optional[DiscreteDistribution] = None,
                alphas: Optional[Sequence[float]] = None) -> List[dict]:
    """
    扫描准确率，每行 {alpha, min_bits, max_bits, range_bits}，用于画出泄露区间带

    prior 缺省为 n 个网站的均匀先验。
    """
    prior = prior if prior is not None else DiscreteDistribution.uniform(n)
    if len(prior) != n:
        raise DataError("prior size does not match n")
    rows = []
    for alpha in (default_alphas() if alphas is None else alphas):
        bounds = leakage_bounds(prior, float(alpha))
        rows.append({
            "alpha": float(alpha),
            "min_bits": bounds.min_bits,
            "max_bits": bounds.max_bits,
            "range_bits": uncertainty_range(n, float(alpha)),
        })
    return rows
