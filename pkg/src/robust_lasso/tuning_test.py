import math

import numpy as np
import pytest

from robust_lasso.core import Provenance
from robust_lasso.tuning import (C_N_DELTA_LOWER, C_N_DELTA_UPPER, LAMBDA_S_FACTOR,
                                 MIN_C_LAMBDA_O, ParameterError, a1_constant, b1_constant,
                                 c_gt, c_kappa_constant, c_n_delta, cond0_decomposition,
                                 condition_report, default_c_lambda_o, eta_delta_cap,
                                 g_function, nguyen_tran_tuning, paper_tuning,
                                 plain_lasso_lambda, rate_constants)


def test_rate_constants_reference_point():
    rates = rate_constants(10000, 1000, 10, 100, 0.1)
    assert rates.r1 == pytest.approx(0.08311, abs=1e-5)
    assert rates.r2 == pytest.approx(0.06512, abs=1e-5)
    assert rates.r_total == pytest.approx(0.14823, abs=1e-5)
    assert rates.r21 <= rates.r22
    assert rates.eta_4 >= 1.0
    assert rates.r_baseline == pytest.approx(rates.r1 + math.sqrt(100 * math.log(10000) / 10000))


def test_rate_constants_without_outliers():
    rates = rate_constants(500, 50, 5, 0, 0.1)
    assert rates.r2 == 0.0
    assert rates.r_total == rates.r1
    assert rates.eta_4 is None


def test_eta_delta_is_one_at_delta_one():
    assert rate_constants(100, 10, 2, 5, 1.0).eta_delta == pytest.approx(1.0)


@pytest.mark.parametrize('args', [
    (2, 10, 1, 0, 0.1),
    (100, 2, 1, 0, 0.1),
    (100, 10, 0, 0, 0.1),
    (100, 10, 11, 0, 0.1),
    (100, 10, 1, 100, 0.1),
    (100, 10, 1, 0, 0.0),
])
def test_rate_constants_rejects_out_of_range(args):
    with pytest.raises(ParameterError):
        rate_constants(*args)


def test_eta_delta_cap_bounds_every_large_n():
    for delta in (0.01, 0.1, 1.0 / 7.0, 0.5):
        cap = eta_delta_cap(delta)
        for n in (100, 1000, 10 ** 6):
            assert rate_constants(n, 10, 1, 0, delta).eta_delta <= cap + 1e-15


def test_paper_tuning_dependency_chain():
    penalties, bundle = paper_tuning(10000, 1000, 10, 100, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    assert bundle.lambda_o == pytest.approx(0.09597, abs=1e-5)
    assert penalties.lambda_s / penalties.lambda_o == pytest.approx(
        LAMBDA_S_FACTOR * bundle.C_lambda_s, rel=1e-14)
    assert penalties.provenance is Provenance.PAPER_RECIPE
    assert bundle.penalties == penalties
    expected_c_z = math.sqrt(3.0 * math.log(10000) / (4.0 * 2.0 * math.log(1e5)))
    assert bundle.C_z == pytest.approx(expected_c_z, abs=1e-12)
    assert bundle.C_lambda_s == pytest.approx(bundle.C_z + math.sqrt(20.0) * bundle.g(100))
    assert bundle.lambda_s - bundle.C_lambda_s * bundle.lambda_o > 0.0
    assert bundle.rates == rate_constants(10000, 1000, 10, 100, 0.1)


def test_c_z_is_free_of_sigma():
    _, low = paper_tuning(5000, 200, 5, 10, 0.1, 0.1, 1.5, C_lambda_o=3.0)
    _, high = paper_tuning(5000, 200, 5, 10, 0.1, 7.0, 1.5, C_lambda_o=3.0)
    assert low.C_z == pytest.approx(high.C_z, rel=1e-12)


def test_paper_tuning_without_outliers_drops_g_term():
    _, bundle = paper_tuning(1000, 50, 5, 0, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    assert bundle.C_lambda_s == bundle.C_z


def test_paper_tuning_rejects_bad_input():
    with pytest.raises(ParameterError):
        paper_tuning(1000, 50, 0, 0, 0.1, 1.0, 1.0)
    with pytest.raises(ParameterError):
        paper_tuning(1000, 50, 5, 0, 0.1, 0.0, 1.0)
    with pytest.raises(ParameterError):
        paper_tuning(1000, 50, 5, 0, 0.1, 1.0, 1.0, C_lambda_o=1.0)


def test_default_c_lambda_o_is_smallest_feasible():
    c = default_c_lambda_o()
    assert c >= MIN_C_LAMBDA_O
    assert c_gt(c) > 0.0
    assert c_gt(c * (1.0 - 1e-9)) <= 0.0
    _, bundle = paper_tuning(1000, 50, 5, 10, 0.1, 1.0, 1.0)
    assert bundle.C_lambda_o == c
    assert bundle.C_gt > 0.0


def test_nguyen_tran_tuning():
    penalties = nguyen_tran_tuning(100, 10, 1.0, 1.0)
    assert penalties.lambda_o == pytest.approx(0.60697, abs=1e-5)
    assert penalties.provenance is Provenance.NGUYEN_TRAN
    n = 40
    boundary = nguyen_tran_tuning(n, math.exp(n / 2.0), 1.0, 1.0, gamma=1.0)
    assert boundary.lambda_s == pytest.approx(
        2.0 * 2.0 * math.sqrt(2.0 * (n / 2.0) / n), rel=1e-12)
    assert nguyen_tran_tuning(100, 10, 0.0, 1.0).degenerate
    with pytest.raises(ParameterError):
        nguyen_tran_tuning(100, 10, 1.0, 1.0, gamma=0.0)
    with pytest.raises(ParameterError):
        nguyen_tran_tuning(100, 10, 1.0, 1.0, gamma=1.5)


def test_plain_lasso_lambda_equals_recipe_without_outliers():
    penalties, _ = paper_tuning(2000, 100, 5, 0, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    assert plain_lasso_lambda(2000, 100, 0.1, 1.0, 1.0) == pytest.approx(penalties.lambda_s,
                                                                         rel=1e-12)


def test_g_function():
    n, s, d, delta, rho, c_kappa = 10000, 10, 1000, 0.1, 1.0, 7.0
    independent = (math.sqrt(2.0 / n) * (4.8 + math.sqrt(math.log(81.0 / delta)))
                   + 1.2 * c_kappa * math.sqrt(2.0 * rho ** 2 * s * math.log(d) / n)
                   + 4.8 * math.sqrt(math.e) * math.sqrt(100.0 / n)
                   * math.sqrt(4.0 + math.log(n / 100.0)))
    assert g_function(100, n, s, d, delta, rho, c_kappa) == pytest.approx(independent,
                                                                          rel=1e-13)
    g1 = g_function(n, n, s, d, delta, rho, c_kappa) - 9.6 * math.sqrt(math.e)
    assert g1 == pytest.approx(g_function(1, n, s, d, delta, rho, c_kappa)
                               - 4.8 * math.sqrt(math.e) * math.sqrt(1.0 / n)
                               * math.sqrt(4.0 + math.log(n)), rel=1e-12)
    values = [g_function(m, 500, 5, 50, 0.1, 1.0, 7.0) for m in range(1, 501)]
    assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))
    with pytest.raises(ParameterError):
        g_function(0, n, s, d, delta, rho, c_kappa)


def test_c_n_delta_bounds_and_monotonicity():
    assert c_n_delta(1.0, 0.0) == pytest.approx(C_N_DELTA_UPPER, abs=1e-12)
    assert C_N_DELTA_UPPER == pytest.approx(0.41069, abs=1e-5)
    checked = 0
    for n in (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7):
        for delta in (0.01, 0.05, 0.1, 1.0 / 7.0):
            a1, b1 = a1_constant(n, delta), b1_constant(n, delta)
            if a1 > 0.75 and b1 < 0.25:
                checked += 1
                assert C_N_DELTA_LOWER <= c_n_delta(a1, b1) <= C_N_DELTA_UPPER
    assert checked > 0
    a_grid = np.linspace(0.8, 1.0, 11)
    assert all(np.diff([c_n_delta(a, 0.1) for a in a_grid]) > 0.0)
    b_grid = np.linspace(0.0, 0.24, 11)
    assert all(np.diff([c_n_delta(0.9, b) for b in b_grid]) < 0.0)


def test_c_r_bound():
    for c in (2.0, 3.0, 10.0):
        _, bundle = paper_tuning(2000, 100, 5, 20, 0.1, 1.0, 1.0, C_lambda_o=c)
        assert 0.0 < bundle.C_r <= c * c / (c * c - 1.0) + 1e-12


def test_condition_report_reference_points():
    _, small = paper_tuning(100, 10, 2, 0, 1.0 / 7.0, 1.0, 1.0, C_lambda_o=2.0)
    report = condition_report(small)
    assert small.a1 == pytest.approx(0.28213, abs=1e-4)
    assert not report.c4.holds
    assert not report.all_satisfied
    _, large = paper_tuning(10 ** 6, 10, 2, 0, 1.0 / 7.0, 1.0, 1.0, C_lambda_o=2.0)
    assert large.a1 == pytest.approx(0.99282, abs=1e-4)
    assert condition_report(large).c4.holds


def test_condition_report_reports_both_sides():
    _, bundle = paper_tuning(2000, 100, 5, 20, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    report = condition_report(bundle, n=2000, d=100, s=5, o=20, delta=0.1)
    assert len(report.conditions()) == 10
    assert report.all_satisfied == all(c.holds for c in report.conditions())
    assert report.cond0.rhs == bundle.C_n_delta
    assert report.lambda_gap.holds
    as_dict = report.to_dict()
    assert set(as_dict['c2']) == {'name', 'lhs', 'rhs', 'holds', 'relation', 'note'}
    with pytest.raises(ParameterError):
        condition_report(bundle, n=1999)


def test_cond_iso_holds_for_recipe():
    _, bundle = paper_tuning(2000, 100, 5, 20, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    factor = LAMBDA_S_FACTOR
    assert condition_report(bundle).cond_iso.lhs == pytest.approx(
        (factor + 1.0) / (factor - 1.0), rel=1e-12)


def test_cond0_decomposition():
    n, d, s, o = 5000, 200, 5, 40
    penalties, _ = paper_tuning(n, d, s, o, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    terms = cond0_decomposition(n, d, s, o, penalties)
    rates = rate_constants(n, d, s, o, 0.1)
    assert terms.A1B1 == pytest.approx(rates.r1 ** 2, abs=1e-14)
    assert terms.A2B2 == pytest.approx(rates.r22 ** 2, abs=1e-14)
    clean, _ = paper_tuning(n, d, s, 0, 0.1, 1.0, 1.0, C_lambda_o=2.0)
    zero = cond0_decomposition(n, d, s, 0, clean)
    assert zero.A1B2 == 0.0 and zero.A2B2 == 0.0
    assert terms.total == pytest.approx(terms.A1B1 + terms.A1B2 + terms.A2B1 + terms.A2B2)


def test_bundle_to_dict_nulls_non_finite():
    _, bundle = paper_tuning(20, 10, 2, 0, 0.5, 1.0, 1.0, C_lambda_o=2.0)
    out = bundle.to_dict()
    assert out['lambda_o'] == bundle.lambda_o
    if not math.isfinite(bundle.nu_E):
        assert out['nu_E'] is None
    assert c_kappa_constant(1.0, 5.0) == 7.0
