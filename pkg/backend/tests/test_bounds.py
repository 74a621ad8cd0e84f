"""准确率与泄露之间闭式界的测试"""
import numpy as np
import pytest

from app.errors import DataError
from app.services.bounds import (
    AccuracyBound,
    alpha_sweep,
    combine_disjoint_worlds,
    leakage_bounds,
    uncertainty_range,
    world_entropy,
)
from app.services.infotheory import DiscreteDistribution
from app.services.quantifier import zipf_prior


def test_range_for_100_sites():
    """95% 准确率、100 个网站时区间宽约 0.33 比特"""
    assert uncertainty_range(100, 0.95) == pytest.approx(0.05 * np.log2(99), abs=1e-12)
    assert uncertainty_range(100, 0.95) == pytest.approx(0.3315, abs=1e-4)


def test_bounds_for_100_sites():
    uniform = DiscreteDistribution.uniform(100)
    assert leakage_bounds(uniform, 0.95).max_bits == pytest.approx(6.36, abs=0.01)
    assert leakage_bounds(uniform, 0.05).min_bits == pytest.approx(0.06, abs=0.01)


@pytest.mark.parametrize("n", [2, 3, 10, 100, 1000, 10000])
def test_range_matches_bounds(n):
    prior = DiscreteDistribution.uniform(n)
    for alpha in np.round(np.arange(1, 100) / 100, 2):
        bounds = leakage_bounds(prior, alpha)
        assert bounds.max_bits - bounds.min_bits == pytest.approx(uncertainty_range(n, alpha), abs=1e-12)


def test_range_independent_of_prior():
    zipf = zipf_prior(range(1, 51))
    uniform = DiscreteDistribution.uniform(50)
    for alpha in (0.1, 0.5, 0.9):
        z = leakage_bounds(zipf, alpha)
        u = leakage_bounds(uniform, alpha)
        assert z.max_bits - z.min_bits == pytest.approx(u.max_bits - u.min_bits, abs=1e-12)
        assert z.max_bits < u.max_bits


def test_perfect_accuracy():
    """准确率为 1 时上下界都等于先验熵"""
    bounds = leakage_bounds(DiscreteDistribution.uniform(8), 1.0)
    assert bounds.min_bits == pytest.approx(3.0)
    assert bounds.max_bits == pytest.approx(3.0)


def test_bounds_not_clipped():
    """先验熵很小、准确率低时上界可以为负"""
    skewed = DiscreteDistribution(np.array([0.99, 0.01]))
    assert leakage_bounds(skewed, 0.5).max_bits < 0


def test_invalid_inputs():
    with pytest.raises(DataError):
        uncertainty_range(1, 0.5)
    with pytest.raises(DataError):
        uncertainty_range(10, 1.5)
    with pytest.raises(DataError):
        AccuracyBound(10, 0.5, DiscreteDistribution.uniform(5))


def test_accuracy_bound():
    bound = AccuracyBound(100, 0.95, DiscreteDistribution.uniform(100))
    assert bound.range_bits == pytest.approx(uncertainty_range(100, 0.95))
    assert bound.bounds == leakage_bounds(DiscreteDistribution.uniform(100), 0.95)


def test_combine_disjoint_worlds():
    assert combine_disjoint_worlds([2.0, 3.0, 4.0]) == pytest.approx(3.0)
    assert combine_disjoint_worlds([1.5]) == 1.5
    with pytest.raises(DataError):
        combine_disjoint_worlds([])


def test_world_entropy():
    assert world_entropy(1024) == pytest.approx(10.0)
    with pytest.raises(DataError):
        world_entropy(0)


def test_alpha_sweep():
    rows = alpha_sweep(100)
    assert len(rows) == 100
    assert rows[0]["alpha"] == 0.01
    assert rows[-1]["alpha"] == 1.0
    assert rows[-1]["range_bits"] == 0.0
    assert all(r["max_bits"] - r["min_bits"] == pytest.approx(r["range_bits"], abs=1e-12) for r in rows)
    with pytest.raises(DataError):
        alpha_sweep(10, DiscreteDistribution.uniform(5))
