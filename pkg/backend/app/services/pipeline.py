"""
流水线编排：各子命令共用的阶段

特征表、分组报告可以从缓存或中间文件恢复，每个阶段都能单独运行。
"""
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import app
from app.config import get_settings
from app.database import get_engine
from app.errors import DataError, UsageError
from app.extractors.feature_extractor import (
    extract_features,
    feature_table,
    read_feature_csv,
    write_feature_csv,
)
from app.extractors.layout import feature_names
from app.logger import get_logger
from app.models import FeatureTable
from app.schemas import (
    LAYOUT_VERSION,
    GroupingReport,
    LeakageResult,
    McConfig,
    PipelineConfig,
    ResampleConfig,
    ResampleMode,
    WorldConfig,
    WorldMode,
)
from app.services.analyzer import (
    FeatureGrouping,
    LeakageRanking,
    build_grouping,
    grouping_from_report,
    grouping_report,
    ranking_from_report,
)
from app.services.artifacts import hash_bytes, hash_directory, to_json
from app.services.cache import ArtifactCache
from app.services.defenses import buflo_template
from app.services.quantifier import (
    build_world,
    category_leakage,
    joint_leakage,
    leakage_for_clusters,
    top_n_curve,
)
from app.services.validation import ConfidenceInterval, bootstrap_ci, subsample_ci
from app.traces import TRACE_SUFFIX, cell_dataset, load_dataset

logger = get_logger(__name__)

STAGE_EXTRACT = "extract"
STAGE_ANALYZE = "analyze"


def open_cache(config: PipelineConfig) -> Optional[ArtifactCache]:
    """--no-cache 时返回 None"""
    if config.no_cache:
        return None
    cache_dir = Path(get_settings().cache_dir)
    return ArtifactCache(get_engine(cache_dir), cache_dir / "artifacts")


def output_dir(config: PipelineConfig, command: str) -> Path:
    path = Path(config.output or f"wfleak-{command}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def table_hash(table: FeatureTable) -> str:
    """特征表内容哈希（数值、列名、行标签、网站顺序）"""
    return hash_bytes(
        table.values.tobytes(),
        "\n".join(table.feature_names),
        "\n".join(table.website_ids),
        "\n".join(table.visit_ids),
        "\n".join(table.websites),
    )


def _store_text(cache: ArtifactCache, key: str, stage: str, suffix: str,
                write: Callable[[Path], object]) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / f"artifact{suffix}"
        write(path)
        cache.store(key, stage, path)


def extract_table(dataset_path: Union[str, Path], cell_size: int, threads: int = 1,
                  cache: Optional[ArtifactCache] = None, progress: bool = False) -> FeatureTable:
    """
    数据集 → 特征表，命中缓存时直接读特征 CSV

    缓存键：全部 trace 文件的内容哈希 + cell 大小 + 布局版本。
    """
    key = None
    if cache is not None:
        input_hash = hash_directory(dataset_path, f"*{TRACE_SUFFIX}")
        key = cache.key(STAGE_EXTRACT, input_hash, {
            "cell_size": cell_size,
            "layout": LAYOUT_VERSION,
            "version": app.__version__,
        })
        hit = cache.lookup(key)
        if hit is not None:
            return read_feature_csv(hit)

    dataset = cell_dataset(load_dataset(dataset_path, threads), cell_size)
    table = feature_table(dataset, threads, progress)
    if cache is not None:
        _store_text(cache, key, STAGE_EXTRACT, ".csv", lambda p: write_feature_csv(table, p))
    return table


def load_table(config: PipelineConfig, cache: Optional[ArtifactCache] = None) -> FeatureTable:
    """--features 优先；否则从 --dataset 提取"""
    if config.features:
        table = read_feature_csv(config.features)
        logger.info(f"读取特征表 {config.features}: {table.n_rows} 行 x {table.n_features} 列")
        return table
    if config.dataset:
        return extract_table(config.dataset, config.cell_size, config.threads, cache, config.progress)
    raise UsageError("either --features or --dataset is required")


def read_monitored(path: Union[str, Path]) -> List[str]:
    """每行一个网站，# 为注释"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"monitored list not found: {path}")
    sites = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    sites = [s for s in sites if s and not s.startswith("#")]
    if not sites:
        raise DataError(f"monitored list {path} is empty")
    return list(dict.fromkeys(sites))


def resolve_world(config: PipelineConfig, websites: Sequence[str],
                  monitored: Optional[Sequence[str]] = None) -> WorldConfig:
    """
    由配置和网站列表构造世界

    monitored 缺省时读取 --monitored 文件；只保留 websites 中存在的网站。
    """
    if monitored is None and config.monitored:
        monitored = read_monitored(config.monitored)
    if config.world == WorldMode.OPEN and not monitored:
        raise UsageError("open world requires --monitored")
    if monitored is not None:
        present = set(websites)
        monitored = [w for w in monitored if w in present]
        if not monitored:
            raise DataError("none of the monitored websites are in the dataset")
    return build_world(websites, config.world, monitored, config.prior, config.prior_file)


def mc_config(config: PipelineConfig, k: Optional[int] = None) -> McConfig:
    return McConfig(k=k or config.mc_samples, seed=config.require_seed())


def template_rho(config: PipelineConfig) -> float:
    return config.template_rho if config.template_rho is not None else get_settings().buflo_rho


def feature_templates(table: FeatureTable, config: PipelineConfig) -> Optional[Dict[int, float]]:
    """
    --template-tau：τ 时长 BuFLO 模式的特征取值，以特征表列号为键

    不是提取特征列名的列没有模板。

    Raises:
        DataError: 特征表中没有任何提取特征列
    """
    if config.template_tau is None:
        return None
    rho = template_rho(config)
    pattern = extract_features(buflo_template(config.template_tau, rho)).values
    position = {name: i for i, name in enumerate(feature_names())}
    templates = {j: float(pattern[position[name]]) for j, name in enumerate(table.feature_names)
                 if name in position}
    if not templates:
        raise DataError("template matching needs extracted feature columns")
    logger.info(f"BuFLO 模式 (τ={config.template_tau:g}, ρ={rho:g}): {len(templates)} 列使用模板取值")
    return templates


def analyze_table(table: FeatureTable, world: WorldConfig, config: PipelineConfig,
                  cache: Optional[ArtifactCache] = None
                  ) -> Tuple[FeatureGrouping, LeakageRanking, GroupingReport]:
    """
    单特征排名 + 剪枝 + 聚类，命中缓存时直接读分组报告

    缓存键：特征表内容哈希 + 世界 + 分析参数 + 种子。
    """
    rank_mc = mc_config(config, config.rank_samples)
    key = None
    if cache is not None:
        key = cache.key(STAGE_ANALYZE, table_hash(table), {
            "world": world.model_dump_json(),
            "top_n": config.top_n,
            "prune_threshold": config.prune_threshold,
            "eps": config.eps,
            "beta": config.beta,
            "k": rank_mc.k,
            "seed": rank_mc.seed,
            "template_tau": config.template_tau,
            "template_rho": template_rho(config) if config.template_tau is not None else None,
            "version": app.__version__,
        })
        hit = cache.lookup(key)
        if hit is not None:
            report = GroupingReport.model_validate_json(hit.read_text(encoding="utf-8"))
            return grouping_from_report(report, table), ranking_from_report(report), report

    grouping, ranking = build_grouping(
        table, world, rank_mc, top_n=config.top_n, prune_threshold=config.prune_threshold,
        eps=config.eps, beta=config.beta, threads=config.threads, progress=config.progress,
        templates=feature_templates(table, config))
    report = grouping_report(grouping, ranking, table, config.top_n, config.prune_threshold, config.eps)
    if cache is not None:
        _store_text(cache, key, STAGE_ANALYZE, ".json",
                    lambda p: p.write_text(to_json(report), encoding="utf-8"))
    return grouping, ranking, report


def load_grouping(path: Union[str, Path], table: FeatureTable) -> Tuple[FeatureGrouping, LeakageRanking]:
    """读取 analyze 写出的分组 JSON"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"grouping file not found: {path}")
    report = GroupingReport.model_validate_json(path.read_text(encoding="utf-8"))
    return grouping_from_report(report, table), ranking_from_report(report)


def grouping_for(table: FeatureTable, world: WorldConfig, config: PipelineConfig,
                 cache: Optional[ArtifactCache] = None) -> FeatureGrouping:
    """有 --grouping 时读取，否则现场分析"""
    if config.grouping:
        return load_grouping(config.grouping, table)[0]
    return analyze_table(table, world, config, cache)[0]


def measure_joint(table: FeatureTable, grouping: FeatureGrouping, world: WorldConfig,
                  config: PipelineConfig) -> LeakageResult:
    """联合泄露，--per-category 时附带各类别的泄露"""
    mc = mc_config(config)
    pooled = not config.per_site
    templates = feature_templates(table, config)
    estimate = joint_leakage(table, grouping, world, mc, config.beta, pooled, config.threads, templates)
    per_category = []
    if config.per_category:
        unnamed = [table.feature_names[j] for j in grouping.kept_features
                   if not table.feature_names[j].startswith("cat")]
        if unnamed:
            raise DataError(f"per-category leakage needs extracted feature columns, got {unnamed[0]!r}")
        per_category = category_leakage(table, grouping, world, mc, config.beta, pooled, config.threads,
                                        templates)
    return LeakageResult(
        mode=world.mode,
        prior_spec=world.prior_spec,
        k=mc.k,
        seed=mc.seed,
        bits=estimate.bits,
        stderr=estimate.mc_standard_error,
        entropy_bits=estimate.entropy_bits,
        degenerate_sample_count=estimate.degenerate_sample_count,
        n_features=len(grouping.kept_features),
        n_clusters=len(grouping.clusters),
        per_category=per_category,
    )


def curve_rows(table: FeatureTable, grouping: FeatureGrouping, ns: Sequence[int], world: WorldConfig,
               config: PipelineConfig) -> List[Dict[str, float]]:
    curve = top_n_curve(table, grouping, ns, world, mc_config(config), config.beta, config.threads,
                        feature_templates(table, config))
    return [{"n": n, "bits": e.bits, "stderr": e.mc_standard_error} for n, e in curve]


def validate_joint(table: FeatureTable, grouping: FeatureGrouping, config: PipelineConfig,
                   resample: ResampleConfig, world_size: Optional[int] = None) -> ConfidenceInterval:
    """
    固定分组，在重采样后的特征表上重新估计联合泄露

    每次试验按样本中的网站重新构造世界（monitored 取与样本的交集）。
    """
    mc = mc_config(config)
    pooled = not config.per_site
    monitored = read_monitored(config.monitored) if config.monitored else None
    templates = feature_templates(table, config)

    def estimator(sample: FeatureTable) -> float:
        world = resolve_world(config, sample.websites, monitored)
        return leakage_for_clusters(sample, grouping.clusters, world, mc, config.beta, pooled,
                                    templates=templates).bits

    logger.info(f"开始 {resample.mode.value}: K={resample.trials}, 置信水平 {resample.ci_level}")
    if resample.mode == ResampleMode.BOOTSTRAP:
        return bootstrap_ci(table, estimator, resample, config.threads)
    return subsample_ci(table, estimator, world_size, resample, config.threads)
