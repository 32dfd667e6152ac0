import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaykey import rate

GRID = np.arange(1, 1000) / 1000


def marcum_mp(a, b):
    """High-precision quadrature of the Ricean tail integral."""
    with mp.workdps(30):
        a, b = mp.mpf(a), mp.mpf(b)
        f = lambda x: x * mp.e ** (-(x * x + a * a) / 2) * mp.besseli(0, a * x)
        if b <= a:
            return float(1 - mp.quad(f, [0, b]))
        return float(mp.quad(f, [b, b + 1, b + 5, mp.inf]))


@pytest.mark.parametrize("a", [0.0, 0.2, 1.0, 3.0, 6.5])
@pytest.mark.parametrize("b", [0.0, 0.05, 0.9, 2.0, 4.5, 8.0])
def test_marcum_against_high_precision_quadrature(a, b):
    assert abs(rate.marcum_q1(a, b) - marcum_mp(a, b)) <= 1e-8


def test_marcum_closed_forms():
    b = np.linspace(0, 5, 11)
    assert np.allclose(rate.marcum_q1(0.0, b), np.exp(-b ** 2 / 2), atol=1e-14)
    assert rate.marcum_q1(2.0, 0.0) == pytest.approx(1.0)
    assert rate.marcum_q1(1.0, np.inf) == 0.0


def test_marcum_complement_small_values_keep_precision():
    # 1 - Q1 at a tiny threshold: P(|h|^2 < 1e-9) for c = 0 is 1 - exp(-1e-9)
    assert rate.marcum_q1_complement(0.0, math.sqrt(2e-9)) == pytest.approx(-math.expm1(-1e-9), rel=1e-9)


def test_marcum_rejects_negative_arguments():
    with pytest.raises(ValueError):
        rate.marcum_q1(-1.0, 1.0)


@given(st.floats(0, 8), st.floats(0, 8), st.floats(0.01, 2))
@settings(max_examples=60, deadline=None)
def test_marcum_monotone_in_both_arguments(a, b, d):
    assert rate.marcum_q1(a, b + d) <= rate.marcum_q1(a, b) + 1e-13
    assert rate.marcum_q1(a + d, b) >= rate.marcum_q1(a, b) - 1e-13


# values below are frozen from 30-digit mpmath evaluations of the closed forms


def test_rayleigh_operating_point():
    assert rate.key_rate_M(0.0, 10.0, 0.75) == pytest.approx(0.532495080827020, abs=1e-12)
    assert rate.outage_threshold_h(0.0, 10.0, 0.75) == pytest.approx(0.178571428571429, abs=1e-12)
    assert rate.outage_probability(0.0, 10.0, 0.75) == pytest.approx(0.163535692707017, abs=1e-12)


def test_ricean_operating_point():
    assert rate.key_rate_M(0.3, 100.0, 0.6) == pytest.approx(2.09310940439148, abs=1e-12)
    assert rate.outage_probability(0.3, 100.0, 0.6) == pytest.approx(0.0735084057963074, abs=1e-10)


def test_pure_los_channel_never_outages_below_unit_gain():
    assert rate.key_rate_M(1.0, 100.0, 0.5) == 0.0
    assert rate.outage_probability(1.0, 100.0, 0.5) == 0.0


def test_beta_endpoints():
    assert rate.key_rate_M(0.0, 10.0, 0.0) == 0.0
    assert rate.outage_probability(0.2, 10.0, 1.0) == 1.0
    assert rate.throughput_value(0.2, 10.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        rate.outage_threshold_h(0.2, 10.0, 1.0)
    with pytest.raises(ValueError):
        rate.key_rate_M(0.2, -1.0, 0.5)


@pytest.mark.parametrize("ns", [1.0, 2.0])
def test_rate_derivative_matches_finite_difference(ns):
    b = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    fd = (rate.key_rate_M(0.3, 50.0, b + h, ns) - rate.key_rate_M(0.3, 50.0, b - h, ns)) / (2 * h)
    assert np.allclose(rate.key_rate_derivative(0.3, 50.0, b, ns), fd, rtol=1e-6)


@pytest.mark.parametrize("c,rho", [(0.0, 10.0), (0.4, 100.0), (0.8, 1000.0)])
def test_outage_derivative_matches_finite_difference(c, rho):
    b = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    fd = (rate.outage_probability(c, rho, b + h) - rate.outage_probability(c, rho, b - h)) / (2 * h)
    assert np.allclose(rate.outage_derivative(c, rho, b), fd, rtol=1e-5, atol=1e-9)


def test_power_cdf_and_pdf_agree():
    c = 0.4
    x = np.linspace(0.01, 4, 40)
    d = 1e-6
    fd = (rate.rician_power_cdf(x + d, c) - rate.rician_power_cdf(x - d, c)) / (2 * d)
    assert np.allclose(rate.rician_power_pdf(x, c), fd, rtol=1e-6)


@pytest.mark.parametrize("ns", [1.0, 2.0])
def test_lower_bound_below_throughput(ns):
    for c in (0.0, 0.3, 0.7):
        for rho in (10.0, 100.0, 1000.0):
            gap = rate.throughput_lower_bound(c, rho, GRID, ns) - rate.throughput_value(c, rho, GRID, ns)
            assert gap.max() <= 1e-12


def test_unimodality_condition():
    assert rate.lb_is_unimodal(0.0, 10.0)  # 0.5 * 10 = 5 > 1.862
    assert not rate.lb_is_unimodal(0.8, 10.0)  # 0.1 * 10 = 1
    assert rate.beta_min(0.0, 10.0) == pytest.approx(0.3)


def test_throughput_report_fields_consistent():
    r = rate.throughput(0.2, 100.0, 0.6)
    assert r.theta == pytest.approx(r.M * (1 - r.p_out))
    assert r.theta_lb <= r.theta


def test_db_round_trip():
    assert rate.linear_to_db(rate.db_to_linear(17.5)) == pytest.approx(17.5)
