"""
Bootstrap 与子采样置信区间

任意泄露估计器都可以套用：估计器是数据集（Dataset 或 FeatureTable）到比特数的纯函数。
区间取 K 次试验值的 nearest-rank 分位数。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from app.errors import DataError, NumericError, WfleakError
from app.logger import get_logger
from app.schemas import ResampleConfig

logger = get_logger(__name__)

T = TypeVar("T")
Estimator = Callable[[T], float]


def nearest_rank_quantile(values: Sequence[float], p: float) -> float:
    """
    nearest-rank 分位数：排序后第 max(1, ⌈p·n⌉) 个值

    Raises:
        DataError: 空列表或 p 不在 [0, 1]
    """
    ordered = np.sort(np.asarray(values, dtype=float))
    if len(ordered) == 0:
        raise DataError("quantile of an empty list")
    if not 0.0 <= p <= 1.0:
        raise DataError("quantile level must lie in [0, 1]")
    rank = max(1, int(np.ceil(p * len(ordered) - 1e-12)))
    return float(ordered[min(rank, len(ordered)) - 1])


@dataclass(frozen=True)
class ConfidenceInterval:
    """置信区间与各次试验的结果（失败的试验值为 None）"""
    low: float
    high: float
    ci_level: float
    trial_values: Tuple[Optional[float], ...]
    point: Optional[float] = None

    @property
    def successful(self) -> List[float]:
        return [v for v in self.trial_values if v is not None]

    @property
    def failed_trials(self) -> List[int]:
        return [i for i, v in enumerate(self.trial_values) if v is None]

    @property
    def width(self) -> float:
        return self.high - self.low


def _run_trials(make_sample: Callable[[np.random.Generator], T], estimator: Estimator,
                config: ResampleConfig, threads: int) -> List[Optional[float]]:
    """按试验编号派生随机流并运行，结果按编号排列"""
    streams = np.random.SeedSequence(config.seed).spawn(config.trials)

    def trial(index: int) -> Optional[float]:
        try:
            sample = make_sample(np.random.default_rng(streams[index]))
            return float(estimator(sample))
        except (WfleakError, ArithmeticError, ValueError) as e:
            logger.warning(f"第 {index} 次试验失败: {e}")
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(trial, range(config.trials)))
    return [trial(i) for i in range(config.trials)]


def _interval(values: List[Optional[float]], config: ResampleConfig,
              point: Optional[float]) -> ConfidenceInterval:
    successful = [v for v in values if v is not None]
    if len(successful) * 2 < config.trials:
        raise NumericError(f"only {len(successful)} of {config.trials} trials succeeded")
    low = nearest_rank_quantile(successful, (1.0 - config.ci_level) / 2.0)
    high = nearest_rank_quantile(successful, (1.0 + config.ci_level) / 2.0)
    logger.info(f"{config.ci_level:.0%} 置信区间 [{low:.4f}, {high:.4f}]，成功 {len(successful)}/{config.trials}")
    return ConfidenceInterval(low, high, config.ci_level, tuple(values), point)


def bootstrap_ci(data: T, estimator: Estimator, config: ResampleConfig,
                 threads: int = 1) -> ConfidenceInterval:
    """
    每个网站内有放回重采样（样本量不变），重复 K 次

    Raises:
        NumericError: 成功的试验少于 K/2
    """
    point = float(estimator(data))
    values = _run_trials(lambda rng: data.resample_per_website(rng), estimator, config, threads)
    return _interval(values, config, point)


def subsample_ci(data: T, estimator: Estimator, world_size: Optional[int], config: ResampleConfig,
                 threads: int = 1) -> ConfidenceInterval:
    """
    每次无放回抽取 world_size 个网站组成新数据集，重复 K 次

    Raises:
        DataError: world_size 大于网站总数
        NumericError: 成功的试验少于 K/2
    """
    websites = list(data.websites)
    size = world_size or config.subset_size or len(websites)
    if size > len(websites):
        raise DataError(f"world size {size} exceeds the {len(websites)} available websites")
    if size < 1:
        raise DataError("world size must be positive")

    def draw(rng: np.random.Generator) -> T:
        picks = np.sort(rng.choice(len(websites), size=size, replace=False))
        return data.restrict_websites([websites[i] for i in picks])

    values = _run_trials(draw, estimator, config, threads)
    return _interval(values, config, None)
