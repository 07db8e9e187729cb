import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from xvar.core import MobiusWeights, SubsetFamily, check_consistency
from xvar.errors import InputError
from xvar.estimation import LossPanel, empirical_var, estimate_extremal_coeffs
from xvar.simulate import (
    BLOCK,
    block_generators,
    sample_max_stable,
    sample_rv_portfolio,
    theta_of_measure,
)
from xvar.tm_lp import DiscreteSpectralMeasure, solve_lower_bound


def tm_pair(theta):
    beta = np.zeros(4)
    beta[[1, 2]] = theta - 1
    beta[3] = 2 - theta
    return DiscreteSpectralMeasure.tawn_molchanov(MobiusWeights(2, beta))


def test_theta_of_measure_examples():
    assert theta_of_measure(DiscreteSpectralMeasure.complete_dependence(4), 0b1011) == pytest.approx(1.0)
    assert theta_of_measure(DiscreteSpectralMeasure.independence(4), 0b1011) == pytest.approx(3.0)
    with pytest.raises(InputError):
        theta_of_measure(DiscreteSpectralMeasure.independence(2), 0b100)


def test_theta_of_lp_measure_reproduces_constraints(industry_pairs):
    fam = SubsetFamily.from_pairs(industry_pairs[:5, :5])
    H = solve_lower_bound(fam, 0.3).measure
    for m, v in zip(fam.masks, fam.values):
        assert theta_of_measure(H, m) == pytest.approx(v, abs=1e-9)


def test_block_generators_cover_range():
    jobs = block_generators(1, 3 * BLOCK + 5)
    assert [(a, b) for a, b, _ in jobs] == [(0, BLOCK), (BLOCK, 2 * BLOCK), (2 * BLOCK, 3 * BLOCK), (3 * BLOCK, 3 * BLOCK + 5)]


@pytest.mark.parametrize("sampler", ["max_stable", "rv"])
def test_deterministic_and_worker_independent(sampler):
    H = tm_pair(1.4)
    n = 2 * BLOCK + 17

    def run(seed, workers):
        if sampler == "rv":
            return sample_rv_portfolio(H, 0.4, n, seed=seed, workers=workers)
        return sample_max_stable(H, n, seed=seed, workers=workers)

    a = run(3, None)
    assert a.tobytes() == run(3, 4).tobytes()
    assert a.tobytes() == run(3, 2).tobytes()
    assert a.tobytes() != run(4, None).tobytes()


def test_prefix_stable_within_block():
    # draws are generated block by block, so a shorter request is a prefix
    H = tm_pair(1.4)
    long = sample_max_stable(H, 1000, seed=9)
    short = sample_max_stable(H, 400, seed=9)
    np.testing.assert_array_equal(long[:400], short)


def test_complete_dependence_is_comonotone():
    H = DiscreteSpectralMeasure(3, [[0.2, 0.3, 0.5]], [1.0])
    Y = sample_max_stable(H, 1000, seed=1)
    ratios = Y / np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(ratios, ratios[:, :1] * np.ones((1, 3)), rtol=1e-14)


def test_independence_margin():
    Y = sample_max_stable(DiscreteSpectralMeasure.independence(3), 100_000, seed=2)
    assert np.mean(Y[:, 0] <= 1) == pytest.approx(np.exp(-1), abs=0.01)
    # coordinates are independent: joint probability factorizes
    both = np.mean((Y[:, 0] <= 1) & (Y[:, 1] <= 1))
    assert both == pytest.approx(np.exp(-2), abs=0.01)


def test_max_ks_against_closed_cdf():
    Y = sample_max_stable(tm_pair(1.5), 100_000, seed=3)
    m = Y.max(axis=1)
    ks = stats.kstest(m, lambda y: np.exp(-1.5 / y)).statistic
    assert ks < 0.01


def test_theta_recovery_from_rv_sample():
    X = sample_rv_portfolio(tm_pair(1.5), 0.5, 100_000, seed=4)
    fam = estimate_extremal_coeffs(LossPanel(X), q0=0.99)
    assert fam[3] == pytest.approx(1.5, abs=0.05)


def test_ratio_of_tails():
    beta = np.zeros(8)
    beta[[1, 2, 4]] = 0.3
    beta[7] = 0.7
    H = DiscreteSpectralMeasure.tawn_molchanov(MobiusWeights(3, beta))
    theta = theta_of_measure(H, 7)
    X = sample_rv_portfolio(H, 0.3, 400_000, seed=5)
    x = empirical_var(X[:, 0], 0.999)
    ratio = np.mean(X.max(axis=1) > x) / np.mean(X[:, 0] > x)
    assert ratio == pytest.approx(theta, abs=0.1)


def test_comonotone_sum_ratio_is_d():
    d = 4
    X = sample_rv_portfolio(DiscreteSpectralMeasure.complete_dependence(d), 0.5, 50_000, seed=6)
    s = X.sum(axis=1)
    assert empirical_var(s, 0.9999) / empirical_var(X[:, 0], 0.9999) == pytest.approx(d, rel=1e-12)


def test_radius_cap_keeps_output_finite():
    X = sample_rv_portfolio(DiscreteSpectralMeasure.independence(2), 1.0, 200_000, seed=7)
    assert np.all(np.isfinite(X))
    assert X.max() <= 1e15 * 2


def test_argument_checks():
    with pytest.raises(InputError):
        sample_rv_portfolio(DiscreteSpectralMeasure.independence(2), 1.5, 10)
    with pytest.raises(InputError):
        sample_max_stable(DiscreteSpectralMeasure.independence(2), -1)
    assert sample_max_stable(DiscreteSpectralMeasure.independence(2), 0).shape == (0, 2)


@settings(max_examples=15)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_simulated_estimates_are_consistent(d, seed):
    r = np.random.default_rng(seed)
    beta = np.zeros(1 << d)
    beta[1:] = r.exponential(size=(1 << d) - 1)
    H = DiscreteSpectralMeasure.tawn_molchanov(MobiusWeights(d, beta))
    X = sample_rv_portfolio(H, 0.4, 5000, seed=seed)
    fam = estimate_extremal_coeffs(LossPanel(X), q0=0.97, family=range(1, 1 << d))
    assert check_consistency(fam, tol=1e-12) == []
