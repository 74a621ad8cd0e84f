"""蒙特卡洛信息泄露量化测试"""
import numpy as np
import pytest

from app.errors import DataError
from app.models import FeatureTable
from app.schemas import McConfig, PriorKind, WorldMode
from app.services import quantifier
from app.services.analyzer import FeatureGrouping, build_grouping
from app.services.bandwidth import DISCRETE_BANDWIDTH
from app.services.bounds import combine_disjoint_worlds
from app.services.density import NatureTag, fit_akde
from app.services.infotheory import exact_mi
from app.services.quantifier import (
    ClassModel,
    allocate_samples,
    build_world,
    category_leakage,
    closed_world_leakage,
    cross_density_percentiles,
    leakage_for_clusters,
    open_world_leakage,
    posterior,
    posterior_matrix,
    prior_from_file,
    read_prior_weights,
    top_n_curve,
    zipf_prior,
)
from app.services.synthetic import (
    informative_table,
    joint_from_conditionals,
    random_conditionals,
    sample_discrete_table,
    separable_table,
)

CONDITIONALS = np.array([
    [0.5, 0.3, 0.1, 0.1],
    [0.1, 0.2, 0.3, 0.4],
    [0.25, 0.25, 0.25, 0.25],
])


@pytest.fixture(name="two_bit_table")
def two_bit_table_fixture():
    """4 个网站：cat1 特征只编码高位，cat2 特征只编码低位"""
    rng = np.random.default_rng(21)
    m = 60
    labels = np.repeat(np.arange(4), m)
    high = 10.0 * (labels // 2) + rng.integers(0, 3, size=len(labels))
    low = 10.0 * (labels % 2) + rng.integers(0, 3, size=len(labels))
    websites = [f"site{s}" for s in range(4)]
    return FeatureTable(np.column_stack([high, low]), tuple(websites[s] for s in labels),
                        tuple(str(i) for i in range(len(labels))), ("cat1_high", "cat2_low"),
                        tuple(websites))


def test_zipf_prior():
    assert zipf_prior([1, 2, 3, 4]).probabilities == pytest.approx([0.48, 0.24, 0.16, 0.12])
    with pytest.raises(DataError):
        zipf_prior([1, 1])
    with pytest.raises(DataError):
        zipf_prior([0, 1])


def test_allocate_samples_largest_remainder():
    assert allocate_samples([0.5, 0.3, 0.2], 7).tolist() == [4, 2, 1]
    assert allocate_samples([1 / 3, 1 / 3, 1 / 3], 4).tolist() == [2, 1, 1]
    counts = allocate_samples(zipf_prior(range(1, 51)), 5000)
    assert counts.sum() == 5000
    with pytest.raises(DataError):
        allocate_samples([1.0], 0)


def test_posterior_matrix_bayes_rule():
    probabilities, degenerate = posterior_matrix(np.log([[0.8, 0.6]]), [0.25, 0.75])
    assert probabilities[0] == pytest.approx([4 / 13, 9 / 13])
    assert not degenerate[0]


def test_posterior_matrix_underflow_falls_back_to_prior():
    probabilities, degenerate = posterior_matrix(np.array([[-np.inf, -np.inf]]), [0.25, 0.75])
    assert probabilities[0].tolist() == [0.25, 0.75]
    assert degenerate[0]


def test_posterior_single_point():
    models = [fit_akde(np.array([0.0, 0.0]), bandwidths=[1.0]), fit_akde(np.array([5.0, 5.0]), bandwidths=[1.0])]
    result = posterior(models, [0.5, 0.5], [0.0])
    assert result.probabilities[0] > 0.99


def test_class_model_is_product_of_groups():
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((40, 3))
    first = fit_akde(samples[:, :2])
    second = fit_akde(samples[:, 2])
    model = ClassModel(((0, 1), (2,)), (first, second))
    points = rng.standard_normal((5, 3))
    expected = ClassModel.single(first).logpdf(points[:, :2]) + ClassModel.single(second).logpdf(points[:, 2:])
    assert model.logpdf(points) == pytest.approx(expected)
    assert model.sample(7, rng).shape == (7, 3)
    with pytest.raises(DataError):
        ClassModel(((0,),), (first,))


def test_matches_discrete_oracle():
    """离散世界里的估计与精确互信息一致"""
    table = sample_discrete_table(CONDITIONALS, 1000, np.random.default_rng(5))
    world = build_world(table.websites)
    estimate = leakage_for_clusters(table, [(0,)], world, McConfig(k=20000, seed=2))
    assert estimate.bits == pytest.approx(exact_mi(joint_from_conditionals(CONDITIONALS)), abs=0.03)
    assert estimate.samples_used == 20000
    assert estimate.entropy_bits == pytest.approx(np.log2(3))


def test_separable_sites_leak_full_entropy():
    table = separable_table(8, 100, np.random.default_rng(1))
    world = build_world(table.websites)
    estimate = leakage_for_clusters(table, [(0,)], world, McConfig(k=2000, seed=0))
    assert estimate.bits == pytest.approx(3.0, abs=1e-6)


def test_identical_sites_leak_nothing():
    conditionals = np.tile([0.4, 0.3, 0.2, 0.1], (8, 1))
    table = sample_discrete_table(conditionals, 2000, np.random.default_rng(8))
    world = build_world(table.websites)
    estimate = leakage_for_clusters(table, [(0,)], world, McConfig(k=5000, seed=0))
    assert estimate.bits <= 0.02


@pytest.mark.parametrize("world_seed", range(20))
def test_random_discrete_worlds_match_oracle(world_seed):
    rng = np.random.default_rng(100 + world_seed)
    n_sites = int(rng.integers(2, 5))
    n_values = int(rng.integers(2, 9))
    # 每个取值的概率至少 0.5 / n_values，保证每个取值都被判为离散
    conditionals = 0.5 * random_conditionals(n_sites, n_values, rng) + 0.5 / n_values
    table = sample_discrete_table(conditionals, 2000, rng)
    estimate = leakage_for_clusters(table, [(0,)], build_world(table.websites),
                                    McConfig(k=5000, seed=world_seed))
    expected = exact_mi(joint_from_conditionals(conditionals))
    assert abs(estimate.bits - expected) <= max(0.05, 3 * estimate.mc_standard_error)


def test_combined_world_averages_leakage():
    """各世界中特征取值的边缘分布相同时，合并世界的泄露是各世界泄露的平均"""
    uniform = np.full((4, 4), 0.25)
    first = 0.7 * np.eye(4) + 0.3 * uniform
    second = 0.4 * np.roll(np.eye(4), 1, axis=1) + 0.6 * uniform
    combined = np.vstack([first, second])
    exact = [exact_mi(joint_from_conditionals(c)) for c in (first, second)]
    assert exact_mi(joint_from_conditionals(combined)) == pytest.approx(combine_disjoint_worlds(exact))

    mc = McConfig(k=5000, seed=4)
    estimates = []
    for seed, conditionals in enumerate((first, second, combined)):
        table = sample_discrete_table(conditionals, 2000, np.random.default_rng(seed))
        estimates.append(leakage_for_clusters(table, [(0,)], build_world(table.websites), mc))
    averaged = combine_disjoint_worlds([estimates[0].bits, estimates[1].bits])
    assert abs(estimates[2].bits - averaged) <= max(0.05, 3 * estimates[2].mc_standard_error)


def test_top_n_curve_plateaus_after_informative_features():
    """10 个信息特征 + 40 个冗余副本：剪枝后只剩 10 个，曲线在 n = 10 之后持平"""
    table = informative_table(4, 150, np.random.default_rng(12), n_informative=10, n_redundant=40)
    world = build_world(table.websites)
    grouping, _ = build_grouping(table, world, McConfig(k=300, seed=2))
    assert len(grouping.kept_features) == 10
    assert len(grouping.pruned_redundant) == 40

    ns = [1, 2, 5, 10, 20, 50]
    curve = top_n_curve(table, grouping, ns, world, McConfig(k=2000, seed=3))
    bits = [e.bits for _, e in curve]
    errors = [e.mc_standard_error for _, e in curve]
    for i in range(len(ns) - 1):
        assert bits[i + 1] >= bits[i] - 2 * max(errors[i], errors[i + 1])
    assert bits[3] > bits[0]
    for i in (4, 5):
        assert abs(bits[i] - bits[3]) <= 2 * errors[3]


def test_independent_clusters_add_up(two_bit_table):
    """两个独立簇各泄露 1 比特，联合泄露 2 比特"""
    world = build_world(two_bit_table.websites)
    mc = McConfig(k=2000, seed=4)
    assert leakage_for_clusters(two_bit_table, [(0,)], world, mc).bits == pytest.approx(1.0, abs=1e-6)
    assert leakage_for_clusters(two_bit_table, [(1,)], world, mc).bits == pytest.approx(1.0, abs=1e-6)
    assert leakage_for_clusters(two_bit_table, [(0,), (1,)], world, mc).bits == pytest.approx(2.0, abs=1e-6)


def test_leakage_is_deterministic(two_bit_table):
    world = build_world(two_bit_table.websites, prior=PriorKind.ZIPF)
    mc = McConfig(k=500, seed=9)
    first = leakage_for_clusters(two_bit_table, [(0,)], world, mc, threads=1)
    second = leakage_for_clusters(two_bit_table, [(0,)], world, mc, threads=4)
    assert first == second


def test_open_world_pooled_and_per_site(two_bit_table):
    """monitored 与 non-monitored 都可分时，泄露等于结果变量的熵"""
    world = build_world(two_bit_table.websites, WorldMode.OPEN, monitored=["site0", "site1"])
    assert world.non_monitored == ["site2", "site3"]
    assert world.outcome_prior() == pytest.approx([0.25, 0.25, 0.5])
    mc = McConfig(k=2000, seed=3)
    pooled = leakage_for_clusters(two_bit_table, [(0, 1)], world, mc, pooled=True)
    per_site = leakage_for_clusters(two_bit_table, [(0, 1)], world, mc, pooled=False)
    assert pooled.entropy_bits == pytest.approx(1.5)
    assert pooled.bits == pytest.approx(1.5, abs=1e-6)
    assert per_site.bits == pytest.approx(1.5, abs=1e-6)


def test_template_value_stays_discrete_through_leakage(monkeypatch):
    """只出现一次的模板取值经 leakage_for_clusters 建模后仍是离散值"""
    rng = np.random.default_rng(4)
    first = rng.normal(0.0, 1.0, 60)
    first[0] = 7.0
    second = rng.normal(3.0, 1.0, 60)
    values = np.column_stack([rng.normal(0.0, 1.0, 120), np.concatenate([first, second])])
    table = FeatureTable(values, ("a",) * 60 + ("b",) * 60, tuple(str(i) for i in range(120)),
                         ("cat1_0", "cat1_1"), ("a", "b"))
    fitted = []

    def recording_fit(*args, **kwargs):
        model = fit_akde(*args, **kwargs)
        fitted.append(model)
        return model

    monkeypatch.setattr(quantifier, "fit_akde", recording_fit)
    world = build_world(table.websites)
    mc = McConfig(k=200, seed=0)

    leakage_for_clusters(table, [(1,)], world, mc, templates={1: 7.0})
    site_a, site_b = fitted
    assert site_a.natures[0].tag == NatureTag.MIXED
    assert site_a.natures[0].discrete_values == frozenset({7.0})
    assert site_a.discrete_mask[:, 0].tolist() == [True] + [False] * 59
    assert site_a.bandwidths[0, 0] == DISCRETE_BANDWIDTH
    assert site_b.natures[0].tag == NatureTag.CONTINUOUS

    fitted.clear()
    leakage_for_clusters(table, [(1,)], world, mc)
    assert fitted[0].natures[0].tag == NatureTag.CONTINUOUS
    assert fitted[0].bandwidths[0, 0] > DISCRETE_BANDWIDTH


def test_open_world_prior_length_checked():
    model = fit_akde(np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        open_world_leakage([model], model, [0.5, 0.25, 0.25], McConfig(k=10, seed=0))


def test_closed_world_model_count_checked():
    model = fit_akde(np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        closed_world_leakage([model], [0.5, 0.5], McConfig(k=10, seed=0))


def test_build_world_options(tmp_path):
    sites = ["a", "b", "c", "d"]
    assert build_world(sites, prior=PriorKind.ZIPF).prior == pytest.approx([0.48, 0.24, 0.16, 0.12])
    with pytest.raises(DataError):
        build_world(sites, WorldMode.OPEN)
    with pytest.raises(DataError):
        build_world(sites, WorldMode.OPEN, monitored=["z"])
    prior_file = tmp_path / "prior.txt"
    prior_file.write_text("# weights\na 1\nb 1\nc 2\nd 4\nextra 9\n", encoding="utf-8")
    world = build_world(sites, prior=PriorKind.FILE, prior_file=prior_file)
    assert world.prior == pytest.approx([0.125, 0.125, 0.25, 0.5])
    assert world.prior_spec == "file:prior.txt"


def test_prior_file_errors(tmp_path):
    path = tmp_path / "prior.txt"
    path.write_text("a 1\nb -1\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_prior_weights(path)
    path.write_text("a 1\n", encoding="utf-8")
    with pytest.raises(DataError):
        prior_from_file(path, ["a", "b"])
    with pytest.raises(DataError):
        read_prior_weights(tmp_path / "missing.txt")
    path.write_text("a 1\nb 3\n", encoding="utf-8")
    assert list(read_prior_weights(path)) == ["a", "b"]


def test_missing_website_rows(two_bit_table):
    world = build_world(list(two_bit_table.websites) + ["ghost"])
    with pytest.raises(DataError):
        leakage_for_clusters(two_bit_table, [(0,)], world, McConfig(k=10, seed=0))


def test_category_leakage_splits_clusters(two_bit_table):
    world = build_world(two_bit_table.websites)
    grouping = FeatureGrouping((0, 1), (), ((0, 1),))
    results = category_leakage(two_bit_table, grouping, world, McConfig(k=1000, seed=1))
    assert [r.category for r in results] == [1, 2]
    assert [r.n_features for r in results] == [1, 1]
    assert all(r.bits == pytest.approx(1.0, abs=1e-6) for r in results)


def test_top_n_curve(two_bit_table):
    world = build_world(two_bit_table.websites)
    grouping = FeatureGrouping((0, 1), (), ((0,), (1,)))
    curve = top_n_curve(two_bit_table, grouping, [1, 2], world, McConfig(k=1000, seed=1))
    assert [n for n, _ in curve] == [1, 2]
    assert [e.bits for _, e in curve] == pytest.approx([1.0, 2.0], abs=1e-6)


def test_cross_density_percentiles():
    monitored = [fit_akde(np.array([0.0, 0.5, 1.0])), fit_akde(np.array([10.0, 10.5, 11.0]))]
    pooled = fit_akde(np.array([100.0, 100.5, 101.0]))
    report = cross_density_percentiles(monitored, pooled, 50, seed=0)
    assert report.percentile == 95.0
    assert report.non_monitored_under_monitored < -10
    assert report.monitored_under_non_monitored < -10
