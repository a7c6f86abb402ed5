import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from src.errors import NotStronglyAperiodic
from src.exact_law import fourth_moment_exact
from src.models import EmpiricalDistribution
from src.stats import (
    chebyshev_report, convergence_report, fourth_moment_mc, half_normal_reference, kolmogorov_quantile,
    ks_distance, ks_two_sample, sigma_squared_mc, tightness_report,
)

samples = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=40)


def test_ks_distance_of_point_mass():
    emp = EmpiricalDistribution(samples=[0.5])
    assert ks_distance(emp, sps.uniform.cdf) == pytest.approx(0.5)


def test_ks_distance_matches_scipy_for_continuous_reference():
    draws = np.random.default_rng(3).normal(size=300)
    emp = EmpiricalDistribution(samples=draws)
    assert ks_distance(emp, sps.norm.cdf) == pytest.approx(sps.kstest(draws, sps.norm.cdf).statistic)


def test_empirical_distribution_needs_samples():
    with pytest.raises(ValueError):
        EmpiricalDistribution(samples=[])


@settings(max_examples=50, deadline=None)
@given(samples, samples)
def test_two_sample_ks_is_symmetric_and_bounded(a, b):
    ea, eb = EmpiricalDistribution(samples=a), EmpiricalDistribution(samples=b)
    d = ks_two_sample(ea, eb)
    assert d == pytest.approx(ks_two_sample(eb, ea))
    assert 0 <= d <= 1
    assert ks_two_sample(ea, ea) == 0


def test_kolmogorov_quantile():
    assert kolmogorov_quantile(100, 0.95) == pytest.approx(0.134, abs=0.002)
    assert kolmogorov_quantile(10_000, 0.95) < kolmogorov_quantile(100, 0.95)


def test_half_normal_reference():
    cdf = half_normal_reference(2.0)
    assert cdf(0.0) == 0.0
    assert cdf(np.inf) == 1.0
    assert cdf(0.5) == pytest.approx(sps.halfnorm.cdf(1.0))
    with pytest.raises(ValueError):
        half_normal_reference(0.0)


def test_fourth_moment_mc_matches_exact(three_cycle, coin):
    exact = fourth_moment_exact(three_cycle, 8, 0, 1)
    estimate, stderr = fourth_moment_mc(three_cycle, 8, 0, 1, 4000, seed=12)
    assert abs(estimate - exact) < 4 * stderr
    estimate, stderr = fourth_moment_mc(coin, 2, 0, 5, 2000, seed=13)
    assert estimate == pytest.approx(0.5, abs=4 * stderr)


def test_fourth_moment_mc_arguments(coin):
    with pytest.raises(ValueError):
        fourth_moment_mc(coin, 10, 0, 1, 999, seed=0)
    assert fourth_moment_mc(coin, 10, 2, 2, 1000, seed=0) == (0.0, 0.0)


def test_sigma_squared_mc(coin):
    value, stderr = sigma_squared_mc(coin, 100, 3000, seed=5)
    assert stderr > 0
    assert value == pytest.approx(101 / 100, abs=4 * stderr)


def test_tightness_report(three_cycle):
    report = tightness_report(three_cycle, [64], [0.05, 0.1, 0.2], 0.5, 200, seed=1)
    assert report.lemma_id == 'tightness'
    assert len(report.ratios) == 3
    assert report.passed
    assert report.slope_bounds[1] == np.inf
    with pytest.raises(ValueError):
        tightness_report(three_cycle, [64], [0.6], 0.5, 200, seed=1)


def test_tightness_report_is_reproducible(three_cycle):
    first = tightness_report(three_cycle, [36], [0.1, 0.2], 0.3, 100, seed=4)
    second = tightness_report(three_cycle, [36], [0.1, 0.2], 0.3, 100, seed=4, workers=2)
    assert first == second


def test_tightness_verdict_uses_largest_n(three_cycle):
    shuffled = tightness_report(three_cycle, [64, 16], [0.05, 0.1, 0.2], 0.5, 200, seed=9)
    ordered = tightness_report(three_cycle, [16, 64], [0.05, 0.1, 0.2], 0.5, 200, seed=9)
    largest = tightness_report(three_cycle, [64], [0.05, 0.1, 0.2], 0.5, 200, seed=9)
    assert shuffled == ordered
    assert shuffled.trend_slope == largest.trend_slope
    assert shuffled.slope_bounds == largest.slope_bounds


def test_chebyshev_report(three_cycle):
    report = chebyshev_report(three_cycle, 100, [(0.0, 0.1), (0.0, 0.2), (0.0, 0.4)], 0.5, 500, seed=2)
    assert report.lemma_id == 'chebyshev'
    assert len(report.ratios) == 3
    assert all(np.isfinite(r.ratio) and r.ratio >= 0 for r in report.ratios)


def test_convergence_report(three_cycle):
    report = convergence_report(three_cycle, [16, 64], [(1.0, 0.0), (0.5, 0.0)], 300, seed=9,
                                reference_paths=300, mesh=2000, eps=0.05, tail_levels=[0.5, 1.0])
    assert report.sigma2 == pytest.approx(2 / 9)
    assert len(report.rows) == 4
    assert len(report.tail) == 4
    headline = [r for r in report.rows if (r.t, r.x) == (1.0, 0.0)]
    assert all(r.ks_half_normal is not None for r in headline)
    assert all(0 <= r.ks_reference <= 1 for r in report.rows)
    probabilities = [r.probability for r in report.tail if r.n == 64]
    assert probabilities[0] >= probabilities[1]


def test_convergence_requires_strong_aperiodicity(coin):
    with pytest.raises(NotStronglyAperiodic):
        convergence_report(coin, [16], [(1.0, 0.0)], 50, seed=1, mesh=100)
