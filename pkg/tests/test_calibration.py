import numpy as np
import pytest
from hypothesis import given, strategies as st

from xvar.calibration import DEFAULT_LAMBDA, SINGLETON_WEIGHT, design_columns, design_matrix, project_to_consistent
from xvar.core import SubsetFamily, check_consistency, full_mask, theta_from_beta
from xvar.errors import InputError


def random_valid_theta(rng, d):
    """Dense valid coefficients with unit singletons, built from beta >= 0."""
    beta = np.zeros(1 << d)
    beta[1:] = rng.exponential(size=(1 << d) - 1) * (rng.random((1 << d) - 1) < 0.5)
    marg = theta_from_beta(beta, d)[[1 << j for j in range(d)]]
    top = marg.max() + 0.1
    for j in range(d):
        beta[1 << j] += top - marg[j]
    return theta_from_beta(beta / top, d)


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_feasible_point_is_fixed_at_zero_ridge(d, seed):
    theta = random_valid_theta(np.random.default_rng(seed), d)
    fam = SubsetFamily(d, {m: theta[m] for m in range(1, 1 << d)}, tol=1e-12)
    cal = project_to_consistent(fam, lam=0.0)
    np.testing.assert_allclose(cal.family.values, fam.values, atol=1e-8)


def test_pair_above_two_is_clipped():
    raw = SubsetFamily(2, {1: 1.0, 2: 1.0, 3: 2.2}, strict=False)
    fam, beta, residual = project_to_consistent(raw, 1e-6)
    assert fam[3] <= 2.0 + 1e-12
    assert check_consistency(fam) == []
    assert residual > 0


def test_industry_pairs_move_little(industry_pairs):
    raw = SubsetFamily.from_pairs(industry_pairs, full=3.15, strict=False)
    cal = project_to_consistent(raw)
    assert cal.max_change <= 0.01
    assert check_consistency(cal.family) == []


def test_matches_reference_nnls():
    from scipy.optimize import nnls as scipy_nnls

    raw = SubsetFamily(3, {1: 1, 2: 1, 4: 1, 3: 1.9, 5: 1.2, 6: 1.95, 7: 2.9}, strict=False)
    lam = 1e-3
    cols = design_columns(raw)
    A = design_matrix(raw.masks, cols)
    w = np.array([SINGLETON_WEIGHT if bin(m).count("1") == 1 else 1.0 for m in raw.masks])
    aug = np.vstack([A * w[:, None], np.sqrt(lam) * np.eye(A.shape[1])])
    rhs = np.concatenate([raw.values * w, np.zeros(A.shape[1])])
    beta, _ = scipy_nnls(aug, rhs)
    fit = A @ beta
    cal = project_to_consistent(raw, lam)
    assert cal.residual == pytest.approx(np.linalg.norm(w * (raw.values - fit)), rel=1e-6)
    # singletons are nearly equal, so the re-standardization is a tiny correction
    np.testing.assert_allclose(cal.family.values, fit / fit[:3].max(), atol=1e-5)


def test_singletons_required():
    with pytest.raises(InputError):
        project_to_consistent(SubsetFamily(2, {1: 1.0, 3: 1.5}, strict=False))
    with pytest.raises(InputError):
        project_to_consistent(SubsetFamily(2, {1: 1.0, 2: 1.0, 3: 1.5}), lam=-1)


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_output_always_valid(d, seed):
    rng = np.random.default_rng(seed)
    raw = {1 << j: 1.0 for j in range(d)}
    for m in range(1, 1 << d):
        k = bin(m).count("1")
        if k > 1 and rng.random() < 0.7:
            raw[m] = rng.uniform(0.8, k + 0.5)
    cal = project_to_consistent(SubsetFamily(d, raw, strict=False))
    assert check_consistency(cal.family) == []
    assert cal.beta.beta.min() >= 0
    # the calibrated values are reproduced by the returned weights
    th = theta_from_beta(cal.beta.beta, d)
    np.testing.assert_allclose([th[m] for m in cal.family.masks], cal.family.values, atol=1e-12)


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_idempotent_without_ridge(d, seed):
    rng = np.random.default_rng(seed)
    raw = {1 << j: 1.0 for j in range(d)}
    for m in range(1, 1 << d):
        k = bin(m).count("1")
        if k > 1:
            raw[m] = rng.uniform(1.0, k)
    once = project_to_consistent(SubsetFamily(d, raw, strict=False), lam=0.0)
    twice = project_to_consistent(once.family, lam=0.0)
    np.testing.assert_allclose(twice.family.values, once.family.values, atol=1e-8)


def test_default_ridge_drift_is_order_lambda(industry_pairs):
    once = project_to_consistent(SubsetFamily.from_pairs(industry_pairs, full=3.15, strict=False))
    twice = project_to_consistent(once.family)
    assert np.abs(twice.family.values - once.family.values).max() <= 10 * DEFAULT_LAMBDA


@given(st.integers(0, 2**32 - 1))
def test_residual_monotone_in_lambda(seed):
    rng = np.random.default_rng(seed)
    d = 3
    raw = {1 << j: 1.0 for j in range(d)}
    for m in range(1, 1 << d):
        k = bin(m).count("1")
        if k > 1:
            raw[m] = rng.uniform(0.9, k + 0.4)
    fam = SubsetFamily(d, raw, strict=False)
    res = [project_to_consistent(fam, lam).residual for lam in (0.0, 1e-6, 1e-3, 1e-1, 1.0)]
    assert all(b >= a - 1e-12 for a, b in zip(res, res[1:]))


def test_restricted_columns_above_cap():
    d = 15
    raw = SubsetFamily.single_dvariate(d, 4.0)
    cols = design_columns(raw)
    assert len(cols) == d + 1
    cal = project_to_consistent(raw)
    assert cal.family[full_mask(d)] == pytest.approx(4.0, abs=1e-4)
