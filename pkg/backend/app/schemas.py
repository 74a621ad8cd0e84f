"""Pydantic schemas：各阶段的配置、结果与缓存文件格式"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import UsageError

MODEL_FORMAT_VERSION = 1
LAYOUT_VERSION = 1


class WorldMode(str, Enum):
    """世界设定"""
    CLOSED = "closed"
    OPEN = "open"


class PriorKind(str, Enum):
    """先验来源"""
    UNIFORM = "uniform"
    ZIPF = "zipf"
    FILE = "file"


class ResampleMode(str, Enum):
    """置信区间的重采样方式"""
    BOOTSTRAP = "bootstrap"
    SUBSAMPLE = "subsample"


class DefenseKind(str, Enum):
    BUFLO = "buflo"
    TAMARAW = "tamaraw"


class McConfig(BaseModel):
    """蒙特卡洛配置：k 为总样本数"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(5000, ge=1, description="蒙特卡洛样本总数")
    seed: int = Field(..., ge=0, description="随机种子")


class WorldConfig(BaseModel):
    """
    网站集合与先验

    closed: monitored 即全部网站，non_monitored 为空，prior 与 websites 一一对应。
    open: monitored 与 non_monitored 不相交且都非空，prior 按 websites
    （monitored 在前，non_monitored 在后）的顺序给出每个网站的先验。
    """
    model_config = ConfigDict(frozen=True)

    mode: WorldMode = WorldMode.CLOSED
    monitored: List[str]
    non_monitored: List[str] = Field(default_factory=list)
    prior: List[float]
    prior_spec: str = PriorKind.UNIFORM.value

    @model_validator(mode='after')
    def check_world(self):
        """检查集合划分与先验"""
        if not self.monitored:
            raise ValueError("monitored website set must not be empty")
        if self.mode == WorldMode.CLOSED and self.non_monitored:
            raise ValueError("closed world has no non-monitored websites")
        if self.mode == WorldMode.OPEN:
            if not self.non_monitored:
                raise ValueError("open world needs non-monitored websites")
            if set(self.monitored) & set(self.non_monitored):
                raise ValueError("monitored and non-monitored sets overlap")
        if len(set(self.websites)) != len(self.websites):
            raise ValueError("duplicate website ids")
        if len(self.prior) != len(self.websites):
            raise ValueError("prior length does not match the website list")
        if any(p < 0 for p in self.prior) or abs(sum(self.prior) - 1.0) > 1e-9:
            raise ValueError("prior must be non-negative and sum to 1")
        return self

    @property
    def websites(self) -> List[str]:
        return list(self.monitored) + list(self.non_monitored)

    def outcome_prior(self) -> List[float]:
        """结果变量的先验：closed 为各网站；open 为各 monitored 网站加上 non-monitored 合并项"""
        if self.mode == WorldMode.CLOSED:
            return list(self.prior)
        n_m = len(self.monitored)
        return list(self.prior[:n_m]) + [float(sum(self.prior[n_m:]))]


class BufloParams(BaseModel):
    """BuFLO 参数"""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(..., gt=0, description="最短传输时间（秒）")
    rho: float = Field(..., gt=0, description="固定发送间隔（秒）")
    cell_size: int = Field(512, gt=0, description="固定包大小（字节）")


class TamarawParams(BaseModel):
    """Tamaraw 参数"""
    model_config = ConfigDict(frozen=True)

    L: int = Field(..., ge=1, description="包数填充倍数")
    rho_out: float = Field(..., gt=0, description="上行发送间隔（秒）")
    rho_in: float = Field(..., gt=0, description="下行发送间隔（秒）")
    cell_size: int = Field(512, gt=0, description="字节长度转 cell 的大小")


class ResampleConfig(BaseModel):
    """
    重采样配置

    bootstrap：每个网站内有放回重采样，样本量等于观测量；
    subsample：按网站无放回抽取 subset_size 个网站。
    """
    model_config = ConfigDict(frozen=True)

    trials: int = Field(20, ge=2, description="重复次数 K")
    ci_level: float = Field(0.90, gt=0, lt=1, description="置信水平")
    mode: ResampleMode = ResampleMode.BOOTSTRAP
    subset_size: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)


class LeakageEstimate(BaseModel):
    """信息泄露估计（比特）"""
    model_config = ConfigDict(frozen=True)

    bits: float = Field(..., ge=0)
    mc_standard_error: float = Field(..., ge=0)
    samples_used: int = Field(..., ge=0)
    raw_bits: float = 0.0  # 截断到 0 之前的值
    entropy_bits: float = 0.0  # H(C) 或 H(O)
    degenerate_sample_count: int = 0


class CategoryLeakage(BaseModel):
    category: int
    name: str
    n_features: int
    bits: float
    stderr: float


class LeakageResult(BaseModel):
    """leakage 子命令的结果文件"""
    mode: WorldMode
    prior_spec: str
    k: int
    seed: int
    bits: float
    stderr: float
    entropy_bits: float
    degenerate_sample_count: int
    n_features: int
    n_clusters: int
    per_category: List[CategoryLeakage] = Field(default_factory=list)


class FeatureNatureSchema(BaseModel):
    tag: str
    discrete_values: List[float] = Field(default_factory=list)


class KernelModelSchema(BaseModel):
    """AKDE 模型的 JSON 缓存格式"""
    format_version: int = MODEL_FORMAT_VERSION
    observations: List[List[float]]
    bandwidths: List[List[float]]
    discrete_mask: List[List[bool]]
    natures: List[FeatureNatureSchema]

    @field_validator('format_version')
    @classmethod
    def check_version(cls, v):
        """只接受当前版本"""
        if v != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {v}")
        return v


class RankedFeature(BaseModel):
    index: int
    name: str
    bits: float
    stderr: float = 0.0
    failed: bool = False


class ClusterReport(BaseModel):
    cluster: int
    features: List[str]
    categories: Dict[str, int]


class GroupingReport(BaseModel):
    """analyze 子命令的结果文件：特征分组及其来源"""
    kept_features: List[str]
    pruned: Dict[str, str]  # 被剪枝的特征 -> 保留者
    clusters: List[ClusterReport]
    dropped_degenerate: List[str] = Field(default_factory=list)
    ranking: List[RankedFeature]
    top_n: int
    prune_threshold: float
    eps: float


class Manifest(BaseModel):
    """每次运行写出的清单，用于复现"""
    command: str
    config: Dict[str, Optional[str]]
    seed: Optional[int]
    versions: Dict[str, str]


class PipelineConfig(BaseModel):
    """命令行合并后的流水线配置（flags > 配置文件 > 环境变量 > 默认值）"""
    dataset: Optional[str] = None
    features: Optional[str] = None
    grouping: Optional[str] = None
    output: Optional[str] = None
    world: WorldMode = WorldMode.CLOSED
    monitored: Optional[str] = None  # 每行一个 monitored 网站的文件
    prior: PriorKind = PriorKind.UNIFORM
    prior_file: Optional[str] = None
    top_n: int = Field(100, ge=1)
    prune_threshold: float = Field(0.9, gt=0, le=1)
    eps: float = Field(0.4, gt=0, le=1)
    beta: int = Field(10, ge=0)
    mc_samples: int = Field(5000, ge=1)
    rank_samples: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    cell_size: int = Field(512, gt=0)
    template_tau: Optional[float] = Field(None, gt=0)  # BuFLO 数据集：τ 时长模式的取值总是判为离散
    template_rho: Optional[float] = Field(None, gt=0)
    threads: int = Field(1, ge=1)
    per_category: bool = False
    per_site: bool = False  # open world 中每个 non-monitored 网站单独建模
    progress: bool = False
    no_cache: bool = False

    @model_validator(mode='after')
    def check_prior_file(self):
        """file 先验需要文件路径"""
        if self.prior == PriorKind.FILE and not self.prior_file:
            raise ValueError("prior 'file' requires prior_file")
        return self

    def require_seed(self) -> int:
        if self.seed is None:
            raise UsageError("--seed is required for stochastic stages")
        return self.seed
