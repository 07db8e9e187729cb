import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import random_marginal_measure, rho_naive
from xvar.closed_form import lower_bound_L, upper_bound_U
from xvar.core import SubsetFamily, full_mask
from xvar.errors import DimensionTooLarge, Infeasible, InconsistentInput, InputError, NumericalFailure
from xvar.tm_lp import (
    DiscreteSpectralMeasure,
    KktCertificate,
    build_tm_lp,
    dual_form,
    dvariate_lower_certificate,
    dvariate_upper_certificate,
    evaluate_discrete_measure,
    kernel,
    ordered_increment_form,
    simplex_sample,
    solve_lower_bound,
    tm_dual_vector,
    verify_kkt,
)


def test_build_d2():
    lp = build_tm_lp(SubsetFamily.single_dvariate(2, 1.5), 0.5)
    assert lp.A.shape == (3, 3)
    np.testing.assert_allclose(lp.c, [1.0, 1.0, 4.0])
    np.testing.assert_array_equal(lp.A, [[1, 0, 1], [0, 1, 1], [1, 1, 1]])
    assert lp.labels == (1, 2, 3)


def test_build_d3_single_constraint():
    lp = build_tm_lp(SubsetFamily.single_dvariate(3, 2.0), 0.4)
    assert lp.A.shape == (4, 7)


def test_build_d10_bivariate(industry_pairs):
    lp = build_tm_lp(SubsetFamily.from_pairs(industry_pairs, full=3.15), 0.1981)
    assert lp.A.shape == (56, 1023)


def test_dimension_cap():
    fam = SubsetFamily.single_dvariate(15, 3.0)
    with pytest.raises(DimensionTooLarge):
        build_tm_lp(fam, 0.5)
    assert build_tm_lp(fam, 0.5, max_dim=15).A.shape == (16, 2**15 - 1)
    with pytest.raises(DimensionTooLarge):
        build_tm_lp(SubsetFamily.single_dvariate(21, 3.0), 0.5, max_dim=30)


def test_solve_d2_hand_value():
    res = solve_lower_bound(SubsetFamily.single_dvariate(2, 1.5), 0.5)
    assert res.rho == pytest.approx(3.0, abs=1e-12)
    assert res.beta[1] == pytest.approx(0.5) and res.beta[3] == pytest.approx(0.5)


def test_solve_matches_closed_form_table_inputs():
    res = solve_lower_bound(SubsetFamily.single_dvariate(10, 3.15), 0.1981)
    assert res.rho == pytest.approx(lower_bound_L(10, 0.1981, 3.15), rel=1e-10)


def test_measure_recovery_and_residuals(industry_pairs):
    fam = SubsetFamily.from_pairs(industry_pairs, full=3.15)
    res = solve_lower_bound(fam, 0.1981)
    H = res.measure
    assert H.total_mass == pytest.approx(10.0, abs=1e-8)
    rho, resid = evaluate_discrete_measure(H, None, 0.1981, fam)
    assert rho == pytest.approx(res.rho, rel=1e-9)
    assert max(abs(v) for v in resid.values()) <= 1e-8


def test_inconsistent_family_rejected():
    fam = SubsetFamily(2, {1: 1, 2: 1, 3: 2.5}, strict=False)
    with pytest.raises(InconsistentInput):
        solve_lower_bound(fam, 0.5)


def test_uninstantiated_inconsistency_is_infeasible():
    # 1~2 and 1~3 comonotone forces theta({2,3}) = 1; no full set so the
    # partial consistency check has nothing to test.
    fam = SubsetFamily(3, {1: 1, 2: 1, 4: 1, 3: 1.0, 5: 1.0, 6: 2.0})
    with pytest.raises(Infeasible):
        solve_lower_bound(fam, 0.5)


@given(st.integers(2, 8), st.floats(0.05, 1.0), st.floats(0, 1))
def test_lp_equals_closed_form(d, xi, s):
    theta = 1 + s * (d - 1)
    res = solve_lower_bound(SubsetFamily.single_dvariate(d, theta), xi)
    assert res.rho == pytest.approx(lower_bound_L(d, xi, theta), rel=1e-8)


def test_nested_families_monotone(industry_pairs):
    xi = 0.3
    sub = industry_pairs[:5, :5]
    base = SubsetFamily.from_pairs(np.ones((5, 5)) * 2)  # independence pairs, loose
    fams = [
        SubsetFamily(5, {1 << j: 1.0 for j in range(5)}),
        SubsetFamily.from_pairs(sub).restrict([1, 2, 4, 8, 16, 3]),
        SubsetFamily.from_pairs(sub).restrict([1, 2, 4, 8, 16, 3, 5, 6]),
        SubsetFamily.from_pairs(sub),
    ]
    vals = [solve_lower_bound(f, xi).rho for f in fams]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert solve_lower_bound(base, xi).rho == pytest.approx(5.0)


# -- discrete measures -------------------------------------------------------------------


def test_measure_validation_and_json():
    with pytest.raises(InputError):
        DiscreteSpectralMeasure(2, [[0.7, 0.7]], [1.0])
    with pytest.raises(InputError):
        DiscreteSpectralMeasure(2, [[0.5, 0.5]], [-1.0])
    H = DiscreteSpectralMeasure(2, [[0.25, 0.75], [0.75, 0.25]], [1.0, 1.0])
    assert DiscreteSpectralMeasure.from_json(H.to_json()) == H


@pytest.mark.parametrize("d", [2, 5])
def test_evaluate_complete_dependence(d):
    xi = 0.4
    H = DiscreteSpectralMeasure.complete_dependence(d)
    fam = SubsetFamily.single_dvariate(d, 1.0)
    rho, resid = evaluate_discrete_measure(H, np.ones(d), xi, fam)
    assert rho == pytest.approx(d ** (1 / xi))
    assert max(abs(v) for v in resid.values()) < 1e-12


@pytest.mark.parametrize("d", [2, 5])
def test_evaluate_independence(d):
    H = DiscreteSpectralMeasure.independence(d)
    fam = SubsetFamily.single_dvariate(d, float(d))
    rho, resid = evaluate_discrete_measure(H, np.ones(d), 0.4, fam)
    assert rho == pytest.approx(d)
    assert resid[full_mask(d)] == pytest.approx(0.0)


def test_evaluate_matches_naive(rng):
    U, h = random_marginal_measure(rng, 4, 9)
    w = rng.uniform(0.5, 2, 4)
    H = DiscreteSpectralMeasure(4, U, h)
    assert evaluate_discrete_measure(H, w, 0.37)[0] == pytest.approx(rho_naive(U, h, 0.37, w), rel=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_random_measures_between_bounds(d):
    rng = np.random.default_rng(d)
    xi = 0.45
    for _ in range(200):
        U, h = random_marginal_measure(rng, d, rng.integers(d, 3 * d))
        H = DiscreteSpectralMeasure(d, U, h)
        theta = float(h @ U.max(axis=1))
        rho, _ = evaluate_discrete_measure(H, None, xi)
        lp = solve_lower_bound(SubsetFamily.single_dvariate(d, min(theta, d)), xi)
        assert lp.rho <= rho + 1e-6
        assert rho <= upper_bound_U(d, xi, min(theta, d)) + 1e-6


# -- certificates ------------------------------------------------------------------------


def test_kkt_from_lp_solution():
    fam = SubsetFamily.single_dvariate(2, 1.5)
    res = solve_lower_bound(fam, 0.5)
    rep = verify_kkt(fam, 0.5, res.certificate(), 4096)
    assert rep.certified
    assert rep.dual_feasibility <= 1e-9
    assert rep.complementary_slackness <= 1e-9
    assert rep.primal_feasibility >= -1e-9
    assert rep.primal_value == pytest.approx(rep.dual_value, rel=1e-12)


def test_kkt_detects_perturbation():
    fam = SubsetFamily.single_dvariate(2, 1.5)
    cert = solve_lower_bound(fam, 0.5).certificate()
    bad = KktCertificate(cert.family, cert.x + np.array([0.1, 0.0, 0.0]), cert.measure)
    rep = verify_kkt(fam, 0.5, bad, 4096)
    assert not rep.certified
    assert rep.complementary_slackness > 1e-3


@pytest.mark.parametrize("d,xi,theta", [(2, 0.5, 1.5), (5, 0.3, 2.5), (10, 0.1981, 3.15), (7, 0.9, 6.5), (4, 0.6, 1.0)])
def test_explicit_lower_certificate(d, xi, theta):
    fam = SubsetFamily.single_dvariate(d, theta)
    cert = dvariate_lower_certificate(d, xi, theta)
    rep = verify_kkt(fam, xi, cert, 2**14)
    assert rep.certified, rep
    assert rep.primal_value == pytest.approx(lower_bound_L(d, xi, theta), rel=1e-10)


@pytest.mark.parametrize("d,xi,theta", [(2, 0.5, 1.5), (5, 0.3, 2.5), (10, 0.1981, 3.15)])
def test_explicit_upper_certificate(d, xi, theta):
    fam = SubsetFamily.single_dvariate(d, theta)
    cert = dvariate_upper_certificate(d, xi, theta)
    rep = verify_kkt(fam, xi, cert, 2**14)
    assert rep.certified, rep
    assert rep.dual_value == pytest.approx(upper_bound_U(d, xi, theta), rel=1e-10)


def test_simplex_sample_is_on_simplex():
    pts = simplex_sample(4, 1000)
    assert pts.shape == (1000, 4)
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)
    assert pts.min() >= 0
    np.testing.assert_array_equal(pts, simplex_sample(4, 1000))


# -- explicit dual vector ----------------------------------------------------------------------


def test_dual_vector_d2_by_hand():
    # x~_J = sum_l C(|J|, l) (-1)^(l+1) (d - |J| + l)^(1/xi) at d=2, 1/xi=2:
    # |J|=1: -1 + 4 = 3; |J|=2: -0 + 2*1 - 4 = -2
    x = tm_dual_vector(2, 0.5)
    np.testing.assert_allclose(x, [0.0, 3.0, 3.0, -2.0], atol=1e-12)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_dual_vector_xi_one_collapses(d, seed):
    u = np.random.default_rng(seed).dirichlet(np.ones(d), size=5)
    np.testing.assert_allclose(dual_form(u, 1.0), u.sum(axis=1), atol=1e-10)


@given(st.integers(1, 6), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_ordered_increment_identity(d, xi, seed):
    u = np.random.default_rng(seed).dirichlet(np.ones(d), size=8)
    lhs = dual_form(u, xi)
    rhs = ordered_increment_form(u, xi)
    scale = max(1.0, np.abs(rhs).max())
    np.testing.assert_allclose(lhs / scale, rhs / scale, atol=1e-10)


@given(st.integers(1, 6), st.floats(0.05, 1.0), st.integers(0, 2**32 - 1))
def test_reverse_minkowski(d, xi, seed):
    u = np.random.default_rng(seed).dirichlet(np.ones(d) * 0.7, size=16)
    b = kernel(u, xi)
    a = dual_form(u, xi)
    assert np.all(b >= a - 1e-9 * np.maximum(1.0, np.abs(b)))


def test_dual_vector_objective_equals_lp(rng):
    # with every subset constrained, c . x~ is the LP optimum
    d, xi = 3, 0.4
    beta = rng.exponential(size=1 << d)
    beta[0] = 0
    from xvar.core import ExtremalCoefficients, theta_from_beta

    fam = ExtremalCoefficients.from_dense(d, theta_from_beta(beta, d)).to_family(strict=False)
    x = tm_dual_vector(d, xi)
    res = solve_lower_bound(fam, xi, check=True)
    assert res.rho == pytest.approx(float(fam.values @ x[list(fam.masks)]), rel=1e-9)


@pytest.mark.parametrize("d,xi,theta", [(9, 0.003872347479877747, 7.234351037443268), (3, 0.026735848350567082, 2.148963678069289)])
def test_small_xi_cost_range(d, xi, theta):
    # objective coefficients spanning ~250 orders of magnitude
    res = solve_lower_bound(SubsetFamily.single_dvariate(d, theta), xi)
    assert res.rho == pytest.approx(lower_bound_L(d, xi, theta), rel=1e-10)


def test_overflowing_costs_are_reported():
    with pytest.raises(NumericalFailure, match="overflows"):
        build_tm_lp(SubsetFamily.single_dvariate(9, 7.0), 0.0008)
