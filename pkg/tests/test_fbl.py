import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaykey import rate
from relaykey.channel import sample_channel
from relaykey.fbl import (FblParams, channel_dispersion, error_probability, fbl_outage, fbl_outage_probability,
                          gaussian_q)

RHO15 = float(rate.db_to_linear(15.0))
LOG2E_SQ = math.log2(math.e) ** 2


def test_dispersion_values():
    assert channel_dispersion(0.0) == 0.0
    assert channel_dispersion(1.0) == pytest.approx(0.375 * LOG2E_SQ)
    assert channel_dispersion(0.375 * 0 + 1e12) == pytest.approx(LOG2E_SQ / 2, rel=1e-9)
    with pytest.raises(ValueError):
        channel_dispersion(-0.1)


def test_gaussian_tail_is_standard():
    assert gaussian_q(0.0) == 0.5
    assert gaussian_q(-40.0) == 1.0
    assert gaussian_q(1.0) == pytest.approx(0.158655253931457)


def test_error_probability_step_limit_at_zero_snr():
    assert error_probability(0.0, 0.5, 100) == 1.0
    assert error_probability(0.0, 0.0, 100) == 0.5


def test_params_validation():
    with pytest.raises(ValueError):
        FblParams(0, 1.0, 0.0, 10.0, 0.5)
    with pytest.raises(ValueError):
        FblParams(10, -1.0, 0.0, 10.0, 0.5)
    p = FblParams(100, 1.25, 0.0, 10.0, 0.5)
    assert p.payload_bits == pytest.approx(125.0)


@pytest.mark.parametrize("c", [0.0, 0.3, 0.7])
@pytest.mark.parametrize("rho_db", [10.0, 20.0])
def test_long_blocks_approach_asymptotic_outage(c, rho_db):
    rho = float(rate.db_to_linear(rho_db))
    beta, R = 0.7, 1.2
    h = (2 ** R - 1) / ((1 - beta) * rho)
    asym = rate.rician_power_cdf(h, c)
    assert abs(fbl_outage(c, rho, beta, R, 10 ** 6) - asym) <= 1e-3


def test_integral_against_monte_carlo():
    n = 1_000_000
    beta, R, L = 0.9, 1.0, 100
    g = np.abs(sample_channel(0.0, rng_seed=2024, size=n)) ** 2 * (1 - beta) * RHO15
    e = error_probability(g, R, L)
    assert abs(e.mean() - fbl_outage(0.0, RHO15, beta, R, L)) <= 3 * e.std() / math.sqrt(n)


def test_zero_rate_outage_follows_small_snr_asymptote():
    # Q(sqrt(L * Gamma)) near Gamma = 0 integrates to about 1 / (2 L mean(Gamma))
    beta = 0.9
    mean_snr = (1 - beta) * RHO15
    for L in (100, 400):
        p = fbl_outage(0.0, RHO15, beta, 0.0, L)
        assert p == pytest.approx(1 / (2 * L * mean_snr), rel=0.05)
    assert fbl_outage(0.0, RHO15, beta, 0.0, 400) < fbl_outage(0.0, RHO15, beta, 0.0, 100) / 3


@given(st.floats(0.0, 4.0), st.floats(0.01, 1.0))
@settings(max_examples=40, deadline=None)
def test_outage_non_decreasing_in_rate(r, dr):
    lo = fbl_outage(0.2, RHO15, 0.8, r, 100)
    hi = fbl_outage(0.2, RHO15, 0.8, r + dr, 100)
    assert hi >= lo - 1e-7


@given(st.floats(0.05, 0.9), st.floats(0.01, 0.09))
@settings(max_examples=40, deadline=None)
def test_outage_non_increasing_in_broadcast_snr(beta, db):
    # a smaller beta leaves more power for the broadcast
    assert fbl_outage(0.0, RHO15, beta, 1.0, 100) <= fbl_outage(0.0, RHO15, beta + db, 1.0, 100) + 1e-7


def test_deterministic_channel_reduces_to_single_snr():
    p = FblParams(100, 1.0, 1.0, 10.0, 0.5)
    assert fbl_outage_probability(p) == pytest.approx(error_probability(5.0, 1.0, 100))


@pytest.mark.parametrize("R", [0.0, 0.05, 0.5, 2.0])
@pytest.mark.parametrize("L", [100, 1000])
def test_integral_against_dense_grid(R, L):
    # Rayleigh |h|^2 ~ Exp(1): integrate on a dense grid that is log-spaced near zero
    from scipy.integrate import simpson

    beta = 0.8
    scale = (1 - beta) * RHO15
    x = np.concatenate([np.geomspace(1e-12, 1.0, 400_001), np.linspace(1.0, 30.0, 400_001)[1:]])
    vals = error_probability(x * scale, R, L) * np.exp(-x)
    oracle = simpson(vals, x=x)
    assert fbl_outage(0.0, RHO15, beta, R, L) == pytest.approx(oracle, abs=1e-7)
