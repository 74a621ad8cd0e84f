"""
自适应核密度估计（AKDE）

每个维度把观测分成离散值与连续值两部分：离散值带宽固定为 0.001，
连续值使用插入式带宽。多维模型是按维度的高斯乘积核。
"""
import json
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from app.errors import DataError
from app.logger import get_logger
from app.schemas import FeatureNatureSchema, KernelModelSchema
from app.services.bandwidth import (
    DISCRETE_BANDWIDTH,
    BandwidthChoice,
    BandwidthMethod,
    continuous_bandwidth,
)

logger = get_logger(__name__)

DEFAULT_BETA = 10
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
# logpdf 分块时每块 (点数 × 观测数 × 维度) 的上限
_CHUNK_ELEMENTS = 4_000_000


class NatureTag(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    MIXED = "mixed"


@dataclass(frozen=True)
class FeatureNature:
    """特征取值的性质；mixed 时 discrete_values 为被判为离散的取值"""
    tag: NatureTag
    discrete_values: FrozenSet[float] = frozenset()

    def __post_init__(self):
        if self.tag == NatureTag.MIXED and not self.discrete_values:
            raise DataError("mixed nature needs at least one discrete value")

    def discrete_mask(self, values: np.ndarray) -> np.ndarray:
        """哪些观测属于离散部分"""
        values = np.asarray(values, dtype=float)
        if self.tag == NatureTag.DISCRETE:
            return np.ones(len(values), dtype=bool)
        if self.tag == NatureTag.CONTINUOUS:
            return np.zeros(len(values), dtype=bool)
        return np.isin(values, sorted(self.discrete_values))


def classify_nature(samples: Sequence[float], beta: int = DEFAULT_BETA,
                    template: Optional[float] = None) -> FeatureNature:
    """
    出现次数超过 beta 的取值判为离散

    template（例如 BuFLO 在 τ 时长下的固定模式取值）总是判为离散。

    Raises:
        DataError: 样本少于 2 个
    """
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise DataError("classify_nature needs at least 2 samples")
    values, counts = np.unique(x, return_counts=True)
    discrete = {float(v) for v in values[counts > beta]}
    if template is not None:
        discrete.add(float(template))
    mask = np.isin(x, sorted(discrete))
    if mask.all():
        return FeatureNature(NatureTag.DISCRETE, frozenset(discrete))
    if not mask.any():
        return FeatureNature(NatureTag.CONTINUOUS)
    return FeatureNature(NatureTag.MIXED, frozenset(discrete))


def select_bandwidth(samples: Sequence[float], nature: FeatureNature) -> BandwidthChoice:
    """
    离散特征返回 0.001；连续（或 mixed 的连续部分）返回插入式带宽，
    失败时依次退回 rule-of-thumb 和退化标记。
    """
    if nature.tag == NatureTag.DISCRETE:
        return BandwidthChoice(DISCRETE_BANDWIDTH, BandwidthMethod.DISCRETE)
    x = np.asarray(samples, dtype=float)
    continuous = x[~nature.discrete_mask(x)]
    if len(continuous) < 2:
        continuous = x
    return continuous_bandwidth(continuous)


@dataclass(frozen=True, eq=False)
class KernelModel:
    """拟合好的 AKDE：m 个观测、每个观测每个维度一个带宽"""
    observations: np.ndarray
    bandwidths: np.ndarray
    discrete_mask: np.ndarray
    natures: Tuple[FeatureNature, ...]

    def __post_init__(self):
        observations = np.atleast_2d(np.asarray(self.observations, dtype=float))
        bandwidths = np.atleast_2d(np.asarray(self.bandwidths, dtype=float))
        mask = np.atleast_2d(np.asarray(self.discrete_mask, dtype=bool))
        if observations.shape[0] < 1 or observations.shape[1] < 1:
            raise DataError("kernel model needs at least one observation and one dimension")
        if bandwidths.shape != observations.shape or mask.shape != observations.shape:
            raise DataError("bandwidths and mask must match the observation matrix")
        if not np.all(bandwidths > 0):
            raise DataError("bandwidths must be positive")
        if len(self.natures) != observations.shape[1]:
            raise DataError("one nature per dimension is required")
        for name, array in (("observations", observations), ("bandwidths", bandwidths),
                            ("discrete_mask", mask)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "natures", tuple(self.natures))

    @property
    def m(self) -> int:
        return self.observations.shape[0]

    @property
    def d(self) -> int:
        return self.observations.shape[1]


def fit_akde(samples: Union[np.ndarray, Sequence], natures: Optional[Sequence[FeatureNature]] = None,
             beta: int = DEFAULT_BETA, bandwidths: Optional[Sequence[float]] = None,
             templates: Optional[Sequence[Optional[float]]] = None) -> KernelModel:
    """
    拟合 AKDE

    Args:
        samples: m×d 观测矩阵（一维输入视为 d = 1）
        natures: 每个维度的性质，缺省时用 classify_nature 判定
        beta: 判定离散值的重复次数阈值
        bandwidths: 每个维度连续部分的带宽，给出时跳过带宽选择
        templates: 每个维度的模板取值（None 表示没有），总是判为离散

    Raises:
        DataError: 空样本或 natures / templates 长度不符
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DataError("fit_akde needs a non-empty m x d sample matrix")
    if not np.all(np.isfinite(x)):
        raise DataError("samples must be finite")
    m, d = x.shape
    if templates is not None and len(templates) != d:
        raise DataError(f"expected {d} templates, got {len(templates)}")

    if natures is None:
        if m == 1:
            natures = [FeatureNature(NatureTag.DISCRETE, frozenset({float(v)})) for v in x[0]]
        else:
            natures = [classify_nature(x[:, j], beta, None if templates is None else templates[j])
                       for j in range(d)]
    natures = tuple(natures)
    if len(natures) != d:
        raise DataError(f"expected {d} natures, got {len(natures)}")
    if bandwidths is not None and len(bandwidths) != d:
        raise DataError(f"expected {d} bandwidths, got {len(bandwidths)}")

    widths = np.empty((m, d))
    mask = np.empty((m, d), dtype=bool)
    for j, nature in enumerate(natures):
        column = x[:, j]
        mask[:, j] = nature.discrete_mask(column)
        if bandwidths is not None:
            h = float(bandwidths[j])
        elif mask[:, j].all():
            h = DISCRETE_BANDWIDTH
        else:
            choice = select_bandwidth(column, nature)
            if choice.fell_back:
                logger.debug(f"维度 {j} 带宽退回 {choice.method.value}: {choice.value:.6g}")
            h = choice.value
        widths[:, j] = np.where(mask[:, j], DISCRETE_BANDWIDTH, h)
    return KernelModel(x, widths, mask, natures)


def _as_points(model: KernelModel, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1, 1)
    elif p.ndim == 1:
        # 一维模型接受一串标量，否则视为单个点
        p = p.reshape(-1, 1) if model.d == 1 else p.reshape(1, -1)
    if p.ndim != 2 or p.shape[1] != model.d:
        raise DataError(f"point dimension {p.shape[-1]} does not match model dimension {model.d}")
    return p


def logpdf(model: KernelModel, points) -> np.ndarray:
    """
    对数密度，按点分块做 log-sum-exp

    Returns:
        每个点一个值
    """
    p = _as_points(model, points)
    log_norm = -np.log(model.bandwidths).sum(axis=1) - model.d * _LOG_SQRT_2PI  # (m,)
    chunk = max(1, _CHUNK_ELEMENTS // (model.m * model.d))
    out = np.empty(len(p))
    for start in range(0, len(p), chunk):
        block = p[start:start + chunk]
        z = (block[:, None, :] - model.observations[None, :, :]) / model.bandwidths[None, :, :]
        log_kernels = -0.5 * np.sum(z * z, axis=2) + log_norm[None, :]
        out[start:start + chunk] = logsumexp(log_kernels, axis=1) - np.log(model.m)
    return out


def pdf(model: KernelModel, point) -> Union[float, np.ndarray]:
    """密度；单个点返回 float"""
    values = np.exp(logpdf(model, point))
    p = np.asarray(point, dtype=float)
    single = p.ndim == 0 or (p.ndim == 1 and model.d > 1)
    return float(values[0]) if single else values


def sample_many(model: KernelModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    抽取 n 个样本（n×d）

    均匀选一个观测，再按该观测的带宽加高斯噪声；离散维度原样返回观测值。
    """
    picks = rng.integers(0, model.m, size=n)
    noise = rng.standard_normal((n, model.d)) * model.bandwidths[picks]
    noise[model.discrete_mask[picks]] = 0.0
    return model.observations[picks] + noise


def sample(model: KernelModel, rng_seed: int) -> np.ndarray:
    """用给定种子抽一个点"""
    return sample_many(model, 1, np.random.default_rng(rng_seed))[0]


def model_to_json(model: KernelModel) -> str:
    """带版本号的 JSON（键排序，浮点数可逆）"""
    schema = KernelModelSchema(
        observations=model.observations.tolist(),
        bandwidths=model.bandwidths.tolist(),
        discrete_mask=model.discrete_mask.tolist(),
        natures=[FeatureNatureSchema(tag=n.tag.value, discrete_values=sorted(n.discrete_values))
                 for n in model.natures],
    )
    return json.dumps(schema.model_dump(), sort_keys=True)


def model_from_json(text: str) -> KernelModel:
    """
    Raises:
        pydantic.ValidationError: 版本或字段不符
        DataError: 数组形状不一致
    """
    schema = KernelModelSchema.model_validate_json(text)
    natures: List[FeatureNature] = [
        FeatureNature(NatureTag(n.tag), frozenset(float(v) for v in n.discrete_values))
        for n in schema.natures
    ]
    return KernelModel(np.asarray(schema.observations, dtype=float),
                       np.asarray(schema.bandwidths, dtype=float),
                       np.asarray(schema.discrete_mask, dtype=bool),
                       tuple(natures))
