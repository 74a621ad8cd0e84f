"""
连续特征的带宽选择

Sheather-Jones solve-the-equation 插入式估计，失败时退回 rule-of-thumb
1.06·σ̂·m^(-1/5)；样本完全相同时标记为退化，使用离散带宽。
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from app.errors import NumericError
from app.logger import get_logger

logger = get_logger(__name__)

DISCRETE_BANDWIDTH = 0.001
SJ_MAX_POINTS = 1000
BRACKET_STEPS = 60
# 高斯核的 ∫K²
_ROUGHNESS = float(norm.pdf(0.0, scale=np.sqrt(2.0)))


class BandwidthMethod(str, Enum):
    PLUGIN = "plugin"
    RULE_OF_THUMB = "rule_of_thumb"
    DISCRETE = "discrete"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class BandwidthChoice:
    value: float
    method: BandwidthMethod

    @property
    def fell_back(self) -> bool:
        """插入式估计没有成功"""
        return self.method in (BandwidthMethod.RULE_OF_THUMB, BandwidthMethod.DEGENERATE)


def rule_of_thumb(samples: np.ndarray) -> float:
    """1.06·σ̂·m^(-1/5)，σ̂ 为无偏标准差"""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise NumericError("rule-of-thumb bandwidth needs at least 2 samples")
    sigma = float(np.std(x, ddof=1))
    if sigma <= 0 or not np.isfinite(sigma):
        raise NumericError("rule-of-thumb bandwidth undefined for zero variance")
    return 1.06 * sigma * len(x) ** (-0.2)


def _phi4(u: np.ndarray) -> np.ndarray:
    return (u ** 4 - 6 * u ** 2 + 3) * norm.pdf(u)


def _phi6(u: np.ndarray) -> np.ndarray:
    return (u ** 6 - 15 * u ** 4 + 45 * u ** 2 - 15) * norm.pdf(u)


def _thin(x: np.ndarray) -> np.ndarray:
    """超过 SJ_MAX_POINTS 时取等间隔的顺序统计量"""
    ordered = np.sort(x)
    if len(ordered) <= SJ_MAX_POINTS:
        return ordered
    picks = np.round(np.linspace(0, len(ordered) - 1, SJ_MAX_POINTS)).astype(int)
    return ordered[picks]


def sheather_jones(samples: np.ndarray) -> float:
    """
    Sheather-Jones solve-the-equation 带宽

    大样本只在 1000 个顺序统计量上求解，再按 (m_sub/m)^(1/5) 缩放到全样本。

    Raises:
        NumericError: 四分位距为 0、泛函估计退化或找不到根
    """
    full = np.asarray(samples, dtype=float)
    if len(full) < 2:
        raise NumericError("plug-in bandwidth needs at least 2 samples")
    x = _thin(full)
    n = len(x)
    spread = float(np.percentile(x, 75) - np.percentile(x, 25))
    if spread <= 0:
        raise NumericError("plug-in bandwidth undefined for zero interquartile range")

    diffs = x[:, None] - x[None, :]
    pairs = n * (n - 1)
    a = 0.92 * spread * n ** (-1 / 7)
    b = 0.912 * spread * n ** (-1 / 9)
    tdb = -np.sum(_phi6(diffs / b)) / (pairs * b ** 7)
    sda = np.sum(_phi4(diffs / a)) / (pairs * a ** 5)
    if tdb == 0 or not np.isfinite(tdb) or not np.isfinite(sda):
        raise NumericError("degenerate density functional estimate")
    ratio = abs(sda / tdb) ** (1 / 7)

    def equation(h: float) -> float:
        alpha2 = 1.357 * ratio * h ** (5 / 7)
        s = np.sum(_phi4(diffs / alpha2)) / (pairs * alpha2 ** 5)
        if s == 0 or not np.isfinite(s):
            raise NumericError("degenerate curvature estimate")
        return (_ROUGHNESS / (n * abs(s))) ** 0.2 - h

    # 从正态参考带宽出发几何扩张，直到区间两端异号
    low = high = float(np.std(x, ddof=1)) * (4 / (3 * n)) ** 0.2
    if low <= 0:
        raise NumericError("zero variance")
    f_low = f_high = equation(low)
    step = 1.1 if f_low > 0 else 0.9
    for _ in range(BRACKET_STEPS):
        if f_low * f_high <= 0:
            break
        low, f_low = high, f_high
        high = low * step
        f_high = equation(high)
    else:
        raise NumericError("plug-in bandwidth equation has no sign change")
    if f_high == 0:
        root = high
    else:
        try:
            root = brentq(equation, min(low, high), max(low, high), xtol=1e-12)
        except (ValueError, RuntimeError) as e:
            raise NumericError(f"plug-in bandwidth did not converge: {e}")

    h = float(root) * (n / len(full)) ** 0.2
    if not np.isfinite(h) or h <= 0:
        raise NumericError("non-positive plug-in bandwidth")
    return h


def continuous_bandwidth(samples: np.ndarray) -> BandwidthChoice:
    """插入式 → rule-of-thumb → 退化（离散带宽）"""
    x = np.asarray(samples, dtype=float)
    try:
        return BandwidthChoice(sheather_jones(x), BandwidthMethod.PLUGIN)
    except NumericError as e:
        logger.debug(f"插入式带宽失败，使用 rule-of-thumb: {e}")
    try:
        return BandwidthChoice(rule_of_thumb(x), BandwidthMethod.RULE_OF_THUMB)
    except NumericError as e:
        logger.debug(f"rule-of-thumb 带宽失败，按离散处理: {e}")
    return BandwidthChoice(DISCRETE_BANDWIDTH, BandwidthMethod.DEGENERATE)
