"""
信息泄露量化

按先验把 k 个蒙特卡洛样本分配给各网站，从各网站的模型中抽样，
用 Bayes 后验计算 H(C|f)，泄露 = H(C) - 平均条件熵。
多维特征按分组（簇）分解为各组 AKDE 的乘积。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import DataError, NumericError
from app.extractors.layout import CATEGORY_NAMES, CategoryId, category_of
from app.logger import get_logger
from app.models import FeatureTable
from app.schemas import (
    CategoryLeakage,
    LeakageEstimate,
    McConfig,
    PriorKind,
    WorldConfig,
    WorldMode,
)
from app.services.density import DEFAULT_BETA, KernelModel, fit_akde, logpdf, sample_many
from app.services.infotheory import DiscreteDistribution, entropy

if TYPE_CHECKING:
    from app.services.analyzer import FeatureGrouping

logger = get_logger(__name__)

ZIPF_EXPONENT = 1.0
DEFAULT_MC_SAMPLES = 5000


def zipf_prior(ranks: Sequence[int], s: float = ZIPF_EXPONENT) -> DiscreteDistribution:
    """
    Pr(rank r) ∝ 1/r^s

    Raises:
        DataError: 排名重复或不是正整数
    """
    r = np.asarray(ranks)
    if len(r) == 0:
        raise DataError("zipf prior needs at least one rank")
    if np.any(r <= 0) or np.any(np.mod(r, 1) != 0):
        raise DataError("zipf ranks must be positive integers")
    if len(np.unique(r)) != len(r):
        raise DataError("zipf ranks must be distinct")
    weights = 1.0 / r.astype(float) ** s
    return DiscreteDistribution(weights / weights.sum())


def uniform_prior(n: int) -> DiscreteDistribution:
    return DiscreteDistribution.uniform(n)


def read_prior_weights(path: Union[str, Path]) -> Dict[str, float]:
    """
    读取 `<website_id> <weight>` 每行一条的先验文件（# 为注释），保持文件中的顺序

    Raises:
        DataError: 文件缺失、格式错误或权重为负
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"prior file not found: {path}")
    weights: Dict[str, float] = {}
    for line_number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise DataError(f"{path} line {line_number}: expected '<website_id> <weight>'")
        try:
            weight = float(fields[1])
        except ValueError:
            raise DataError(f"{path} line {line_number}: invalid weight {fields[1]!r}")
        if weight < 0 or not np.isfinite(weight):
            raise DataError(f"{path} line {line_number}: weight must be finite and non-negative")
        weights[fields[0]] = weight
    if not weights:
        raise DataError(f"prior file {path} is empty")
    return weights


def prior_from_file(path: Union[str, Path], websites: Sequence[str]) -> DiscreteDistribution:
    """
    先验文件按 websites 顺序取权重并归一化

    Raises:
        DataError: 文件无法读取或缺少某个网站
    """
    weights = read_prior_weights(path)
    missing = [w for w in websites if w not in weights]
    if missing:
        raise DataError(f"prior file {path} has no weight for: {', '.join(missing)}")
    extra = set(weights) - set(websites)
    if extra:
        logger.warning(f"先验文件中有 {len(extra)} 个网站不在数据集中，已忽略")
    return DiscreteDistribution.from_counts([weights[w] for w in websites])


def allocate_samples(prior: Union[DiscreteDistribution, Sequence[float]], k: int) -> np.ndarray:
    """
    最大余数法把 k 个样本按先验分配，总数恰好为 k

    余数相同时下标小的优先。
    """
    p = prior.probabilities if isinstance(prior, DiscreteDistribution) else np.asarray(prior, dtype=float)
    if k < 1:
        raise DataError("sample count must be positive")
    quotas = p * k
    counts = np.floor(quotas).astype(np.int64)
    remaining = k - int(counts.sum())
    if remaining > 0:
        order = np.lexsort((np.arange(len(p)), -(quotas - counts)))
        counts[order[:remaining]] += 1
    return counts


@dataclass(frozen=True, eq=False)
class ClassModel:
    """
    一个类别（网站）的分组模型

    groups 是每个簇在特征向量中的位置，密度为各簇 AKDE 的乘积。
    """
    groups: Tuple[Tuple[int, ...], ...]
    models: Tuple[KernelModel, ...]

    def __post_init__(self):
        if len(self.groups) != len(self.models) or not self.groups:
            raise DataError("class model needs one kernel model per group")
        for group, model in zip(self.groups, self.models):
            if len(group) != model.d:
                raise DataError("group size does not match its model dimension")

    @property
    def d(self) -> int:
        return sum(len(g) for g in self.groups)

    @classmethod
    def single(cls, model: KernelModel) -> "ClassModel":
        return cls((tuple(range(model.d)),), (model,))

    def logpdf(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, self.d)
        total = np.zeros(len(p))
        for group, model in zip(self.groups, self.models):
            total += logpdf(model, p[:, list(group)])
        return total

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, self.d))
        for group, model in zip(self.groups, self.models):
            out[:, list(group)] = sample_many(model, n, rng)
        return out


def _as_class_models(models: Sequence[Union[ClassModel, KernelModel, None]]) -> List[ClassModel]:
    result = []
    for i, model in enumerate(models):
        if model is None:
            raise DataError(f"class {i} has no fitted model")
        result.append(ClassModel.single(model) if isinstance(model, KernelModel) else model)
    dims = {m.d for m in result}
    if len(dims) > 1:
        raise DataError("class models have different dimensions")
    return result


def fit_class_models(class_samples: Sequence[np.ndarray], groups: Sequence[Sequence[int]],
                     beta: int = DEFAULT_BETA, threads: int = 1,
                     templates: Optional[Sequence[Optional[float]]] = None) -> List[ClassModel]:
    """
    每个类别按分组拟合 AKDE

    templates 按样本矩阵的列给出模板取值（None 表示该列没有模板）。

    Raises:
        DataError: 某个类别没有样本
    """
    groups = tuple(tuple(g) for g in groups)

    def fit(samples: np.ndarray) -> ClassModel:
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise DataError("every class needs at least one observation")
        return ClassModel(groups, tuple(
            fit_akde(samples[:, list(g)], beta=beta,
                     templates=None if templates is None else [templates[p] for p in g])
            for g in groups))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fit, class_samples))
    return [fit(s) for s in class_samples]


def posterior_matrix(log_likelihoods: np.ndarray, prior: Sequence[float]
                     ) -> Tuple[np.ndarray, np.ndarray]:
    """
    log 空间里的 Bayes 后验

    Returns:
        (n×C 后验, 退化标记)；所有类别密度都下溢的行退回先验
    """
    loglik = np.atleast_2d(np.asarray(log_likelihoods, dtype=float))
    p = np.asarray(prior, dtype=float)
    with np.errstate(divide="ignore"):
        joint = loglik + np.log(p)[None, :]
    top = joint.max(axis=1)
    degenerate = ~np.isfinite(top)
    shift = np.where(degenerate, 0.0, top)
    with np.errstate(invalid="ignore"):
        weights = np.exp(joint - shift[:, None])
    weights[degenerate] = p
    weights = np.nan_to_num(weights, nan=0.0)
    return weights / weights.sum(axis=1, keepdims=True), degenerate


def posterior(models: Sequence[Union[ClassModel, KernelModel]], prior: Sequence[float],
              point: Sequence[float]) -> DiscreteDistribution:
    """单个点的后验 Pr(c|f)"""
    class_models = _as_class_models(models)
    loglik = np.array([[m.logpdf(np.asarray(point, dtype=float).reshape(1, -1))[0]
                        for m in class_models]])
    probabilities, degenerate = posterior_matrix(loglik, prior)
    if degenerate[0]:
        logger.warning("所有类别的密度都下溢，后验退回先验")
    return DiscreteDistribution(probabilities[0])


def _row_entropies(probabilities: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probabilities > 0, probabilities * np.log2(probabilities), 0.0)
    return -terms.sum(axis=1)


def _mc_leakage(models: Sequence[Union[ClassModel, KernelModel]], prior: Sequence[float],
                outcome_of: Sequence[int], mc: McConfig, threads: int = 1) -> LeakageEstimate:
    """
    蒙特卡洛泄露估计

    outcome_of 把类别映射到结果变量（open world 里 non-monitored 合并为一个结果）。
    每个类别一个由 SeedSequence 派生的随机流，结果与线程调度无关。
    """
    class_models = _as_class_models(models)
    p = np.asarray(prior, dtype=float)
    if len(class_models) != len(p):
        raise DataError(f"{len(class_models)} class models for a prior over {len(p)} classes")
    DiscreteDistribution(p)
    outcome_of = np.asarray(outcome_of, dtype=np.int64)
    n_outcomes = int(outcome_of.max()) + 1
    outcome_prior = np.bincount(outcome_of, weights=p, minlength=n_outcomes)
    to_outcome = np.zeros((len(p), n_outcomes))
    to_outcome[np.arange(len(p)), outcome_of] = 1.0

    counts = allocate_samples(p, mc.k)
    streams = np.random.SeedSequence(mc.seed).spawn(len(class_models))
    points = [class_models[c].sample(int(counts[c]), np.random.default_rng(streams[c]))
              for c in range(len(class_models)) if counts[c] > 0]
    samples = np.vstack(points)

    def evaluate(model: ClassModel) -> np.ndarray:
        return model.logpdf(samples)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(evaluate, class_models))
    else:
        columns = [evaluate(m) for m in class_models]
    probabilities, degenerate = posterior_matrix(np.column_stack(columns), p)
    conditional = _row_entropies(probabilities @ to_outcome)
    if not np.all(np.isfinite(conditional)):
        raise NumericError("non-finite conditional entropy in Monte Carlo samples")

    n = len(conditional)
    mean = float(conditional.mean())
    stderr = float(conditional.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    h_outcome = entropy(DiscreteDistribution(outcome_prior / outcome_prior.sum()))
    raw = h_outcome - mean
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        logger.warning(f"{n_degenerate} 个样本的后验退化，已使用先验")
    return LeakageEstimate(
        bits=max(0.0, raw),
        mc_standard_error=stderr,
        samples_used=n,
        raw_bits=raw,
        entropy_bits=h_outcome,
        degenerate_sample_count=n_degenerate,
    )


def closed_world_leakage(models: Sequence[Union[ClassModel, KernelModel]],
                         prior: Union[DiscreteDistribution, Sequence[float]],
                         mc: McConfig, threads: int = 1) -> LeakageEstimate:
    """closed world：I(C; F) = H(C) - H(C|F)"""
    p = prior.probabilities if isinstance(prior, DiscreteDistribution) else prior
    return _mc_leakage(models, p, np.arange(len(p)), mc, threads)


def open_world_leakage(models_m: Sequence[Union[ClassModel, KernelModel]],
                       model_n: Union[ClassModel, KernelModel],
                       prior: Union[DiscreteDistribution, Sequence[float]],
                       mc: McConfig, threads: int = 1) -> LeakageEstimate:
    """
    open world，non-monitored 用一个合并的 AKDE

    prior 是结果变量 O 的先验：各 monitored 网站在前，non-monitored 合并项在最后。
    """
    if not models_m:
        raise DataError("open world needs at least one monitored model")
    if model_n is None:
        raise DataError("open world needs a non-monitored model")
    p = prior.probabilities if isinstance(prior, DiscreteDistribution) else np.asarray(prior, dtype=float)
    if len(p) != len(models_m) + 1:
        raise DataError("open-world prior must cover each monitored site plus the non-monitored lump")
    return _mc_leakage(list(models_m) + [model_n], p, np.arange(len(p)), mc, threads)


def open_world_leakage_per_site(models_m: Sequence[Union[ClassModel, KernelModel]],
                                models_n: Sequence[Union[ClassModel, KernelModel]],
                                prior: Union[DiscreteDistribution, Sequence[float]],
                                mc: McConfig, threads: int = 1) -> LeakageEstimate:
    """
    open world，每个 non-monitored 网站单独建模，后验中把它们的概率相加

    prior 是所有网站的先验（monitored 在前）。
    """
    if not models_m or not models_n:
        raise DataError("open world needs monitored and non-monitored models")
    p = prior.probabilities if isinstance(prior, DiscreteDistribution) else np.asarray(prior, dtype=float)
    if len(p) != len(models_m) + len(models_n):
        raise DataError("prior must cover every monitored and non-monitored site")
    outcome_of = np.concatenate([np.arange(len(models_m)),
                                 np.full(len(models_n), len(models_m))])
    return _mc_leakage(list(models_m) + list(models_n), p, outcome_of, mc, threads)


def build_world(websites: Sequence[str], mode: WorldMode = WorldMode.CLOSED,
                monitored: Optional[Sequence[str]] = None,
                prior: PriorKind = PriorKind.UNIFORM,
                prior_file: Optional[Union[str, Path]] = None) -> WorldConfig:
    """
    由数据集网站列表构造 WorldConfig

    zipf 先验的排名取网站在数据集中的位置（从 1 开始）；open world 中
    monitored 之外的网站都是 non-monitored。
    """
    websites = list(websites)
    if mode == WorldMode.CLOSED:
        monitored_list = list(monitored) if monitored else websites
        non_monitored: List[str] = []
    else:
        if not monitored:
            raise DataError("open world needs a monitored website list")
        monitored_list = list(monitored)
        unknown = set(monitored_list) - set(websites)
        if unknown:
            raise DataError(f"monitored websites not in dataset: {sorted(unknown)}")
        non_monitored = [w for w in websites if w not in set(monitored_list)]
    ordered = monitored_list + non_monitored

    if prior == PriorKind.UNIFORM:
        distribution = uniform_prior(len(ordered))
        spec = PriorKind.UNIFORM.value
    elif prior == PriorKind.ZIPF:
        position = {w: i + 1 for i, w in enumerate(websites)}
        distribution = zipf_prior([position.get(w, len(websites) + i + 1) for i, w in enumerate(ordered)])
        spec = PriorKind.ZIPF.value
    else:
        if prior_file is None:
            raise DataError("prior 'file' needs a prior file")
        distribution = prior_from_file(prior_file, ordered)
        spec = f"file:{Path(prior_file).name}"

    return WorldConfig(mode=mode, monitored=monitored_list, non_monitored=non_monitored,
                       prior=distribution.probabilities.tolist(), prior_spec=spec)


def _cluster_columns(clusters: Sequence[Sequence[int]]) -> Tuple[List[int], List[Tuple[int, ...]]]:
    """簇 → (特征列, 每个簇在拼接向量中的位置)"""
    columns: List[int] = []
    groups: List[Tuple[int, ...]] = []
    for cluster in clusters:
        start = len(columns)
        columns.extend(cluster)
        groups.append(tuple(range(start, len(columns))))
    return columns, groups


def leakage_for_clusters(table: FeatureTable, clusters: Sequence[Sequence[int]], world: WorldConfig,
                         mc: McConfig, beta: int = DEFAULT_BETA, pooled: bool = True,
                         threads: int = 1, templates: Optional[Mapping[int, float]] = None
                         ) -> LeakageEstimate:
    """
    给定特征簇，在 world 上拟合各类别模型并估计泄露

    templates 以特征表列号为键，给出总是判为离散的模板取值。

    Raises:
        DataError: 簇为空或某个网站在特征表中没有行
    """
    clusters = [tuple(c) for c in clusters if len(c)]
    if not clusters:
        raise DataError("no features to measure")
    columns, groups = _cluster_columns(clusters)
    missing = [w for w in world.websites if len(table.rows_for(w)) == 0]
    if missing:
        raise DataError(f"no observations for websites: {', '.join(missing[:5])}")
    column_templates = None if templates is None else [templates.get(j) for j in columns]

    def fit(class_samples, workers: int = threads) -> List[ClassModel]:
        return fit_class_models(class_samples, groups, beta, workers, column_templates)

    if world.mode == WorldMode.CLOSED:
        models = fit(table.class_samples(columns, world.monitored))
        return closed_world_leakage(models, world.prior, mc, threads)

    monitored = fit(table.class_samples(columns, world.monitored))
    non_monitored_samples = table.class_samples(columns, world.non_monitored)
    if pooled:
        pooled_model = fit([np.vstack(non_monitored_samples)], 1)[0]
        return open_world_leakage(monitored, pooled_model, world.outcome_prior(), mc, threads)
    non_monitored = fit(non_monitored_samples)
    return open_world_leakage_per_site(monitored, non_monitored, world.prior, mc, threads)


def joint_leakage(table: FeatureTable, grouping: "FeatureGrouping", world: WorldConfig,
                  mc: McConfig, beta: int = DEFAULT_BETA, pooled: bool = True,
                  threads: int = 1, templates: Optional[Mapping[int, float]] = None) -> LeakageEstimate:
    """分组后全部特征的联合泄露"""
    logger.info(f"联合泄露: {len(grouping.kept_features)} 个特征, {len(grouping.clusters)} 个簇, "
                f"{world.mode.value} world, k={mc.k}")
    estimate = leakage_for_clusters(table, grouping.clusters, world, mc, beta, pooled, threads, templates)
    logger.info(f"联合泄露 {estimate.bits:.4f} ± {estimate.mc_standard_error:.4f} bits")
    return estimate


def _category_name(category: int) -> str:
    try:
        return CATEGORY_NAMES[CategoryId(category)]
    except ValueError:
        return str(category)


def category_leakage(table: FeatureTable, grouping: "FeatureGrouping", world: WorldConfig,
                     mc: McConfig, beta: int = DEFAULT_BETA, pooled: bool = True,
                     threads: int = 1, templates: Optional[Mapping[int, float]] = None
                     ) -> List[CategoryLeakage]:
    """每个类别的泄露：把分组限制到该类别的特征"""
    by_category: Dict[int, List[Tuple[int, ...]]] = {}
    for cluster in grouping.clusters:
        parts: Dict[int, List[int]] = {}
        for j in cluster:
            parts.setdefault(category_of(table.feature_names[j]), []).append(j)
        for category, members in parts.items():
            by_category.setdefault(category, []).append(tuple(members))

    results = []
    for category in sorted(by_category):
        clusters = by_category[category]
        estimate = leakage_for_clusters(table, clusters, world, mc, beta, pooled, threads, templates)
        name = _category_name(category)
        results.append(CategoryLeakage(category=category, name=name,
                                       n_features=sum(len(c) for c in clusters),
                                       bits=estimate.bits, stderr=estimate.mc_standard_error))
        logger.info(f"类别 {name}: {estimate.bits:.4f} bits")
    return results


def top_n_curve(table: FeatureTable, grouping: "FeatureGrouping", ns: Sequence[int],
                world: WorldConfig, mc: McConfig, beta: int = DEFAULT_BETA,
                threads: int = 1, templates: Optional[Mapping[int, float]] = None
                ) -> List[Tuple[int, LeakageEstimate]]:
    """
    前 n 个特征（按排名）的联合泄露随 n 的变化

    保留原分组结构，只取其中排名前 n 的特征；各 n 使用同一个种子。
    """
    curve = []
    for n in ns:
        chosen = set(grouping.kept_features[:n])
        clusters = [tuple(j for j in c if j in chosen) for c in grouping.clusters]
        estimate = leakage_for_clusters(table, clusters, world, mc, beta, threads=threads,
                                        templates=templates)
        curve.append((int(n), estimate))
        logger.info(f"top-{n}: {estimate.bits:.4f} ± {estimate.mc_standard_error:.4f} bits")
    return curve


@dataclass(frozen=True)
class CrossDensityReport:
    """open world 模型规模诊断：一侧样本在另一侧 AKDE 下的 log10 密度分位数"""
    percentile: float
    non_monitored_under_monitored: float
    monitored_under_non_monitored: float


def cross_density_percentiles(models_m: Sequence[Union[ClassModel, KernelModel]],
                              model_n: Union[ClassModel, KernelModel], n: int, seed: int,
                              q: float = 95.0) -> CrossDensityReport:
    """
    non-monitored 样本在各 monitored 模型下、monitored 样本在 non-monitored 模型下的
    log10 密度的第 q 百分位
    """
    monitored = _as_class_models(models_m)
    (pooled,) = _as_class_models([model_n])
    streams = np.random.SeedSequence(seed).spawn(len(monitored) + 1)
    from_n = pooled.sample(n, np.random.default_rng(streams[-1]))
    scored_by_m = np.concatenate([m.logpdf(from_n) for m in monitored])
    per_site = max(1, n // len(monitored))
    from_m = np.vstack([m.sample(per_site, np.random.default_rng(s))
                        for m, s in zip(monitored, streams[:-1])])
    scored_by_n = pooled.logpdf(from_m)
    to_log10 = 1.0 / np.log(10)
    return CrossDensityReport(
        percentile=q,
        non_monitored_under_monitored=float(np.percentile(scored_by_m * to_log10, q)),
        monitored_under_non_monitored=float(np.percentile(scored_by_n * to_log10, q)),
    )
