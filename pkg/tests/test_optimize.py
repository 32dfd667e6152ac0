import warnings

import numpy as np
import pytest
from scipy.optimize import brentq

from relaykey import rate
from relaykey.optimize import (GRID, Method, NoRootError, UnimodalityWarning, grid_argmax, keyrate_grid_scan,
                               newton_bisect, optimize_keyrate_constrained, optimize_throughput_grid,
                               optimize_throughput_lb, table1)


def test_grid_argmax_prefers_smaller_beta_on_ties():
    vals = np.zeros(GRID.size)
    vals[[10, 20]] = 1.0
    assert grid_argmax(vals)[0] == GRID[10]


def test_grid_optimum_is_a_grid_maximum():
    res = optimize_throughput_grid(0.0, 1000.0, nlos_scale=2.0)
    assert res.method is Method.GRID_EXACT
    assert res.beta_star == pytest.approx(0.545)
    theta = rate.throughput_value(0.0, 1000.0, GRID, 2.0)
    assert res.objective_value == pytest.approx(theta.max())


@pytest.mark.parametrize("c,rho_db", [(0.0, 10), (0.3, 20), (0.6, 30), (0.2, 15)])
def test_lb_ascent_finds_the_bound_maximiser(c, rho_db):
    rho = 10 ** (rho_db / 10)
    res = optimize_throughput_lb(c, rho, nlos_scale=2.0)
    best = GRID[int(np.argmax(rate.throughput_lower_bound(c, rho, GRID, 2.0)))]
    assert res.converged
    assert abs(res.beta_star - best) <= 0.001 + 1e-9


def test_lb_ascent_warns_and_falls_back_when_not_unimodal():
    with pytest.warns(UnimodalityWarning):
        res = optimize_throughput_lb(0.8, 3.0)
    assert res.note == "grid fallback"


def test_newton_bisect_on_cubic():
    root, it = newton_bisect(lambda x: x ** 3 - 2, lambda x: 3 * x ** 2, 0.0, 2.0)
    assert root == pytest.approx(2 ** (1 / 3), abs=1e-13)
    assert it < 50


def test_newton_bisect_survives_zero_derivative():
    # flat start: the Newton step is undefined and bisection must take over
    root, _ = newton_bisect(lambda x: (x - 0.5) ** 3, lambda x: 3 * (x - 0.5) ** 2, 0.0, 1.3)
    assert root == pytest.approx(0.5, abs=1e-4)


def test_newton_bisect_requires_bracket():
    with pytest.raises(NoRootError):
        newton_bisect(lambda x: x + 1, lambda x: 1.0, 0.0, 1.0)


@pytest.mark.parametrize("eta", [1e-3, 1e-2, 1e-1])
@pytest.mark.parametrize("c,rho", [(0.0, 10.0), (0.3, 100.0), (0.7, 1000.0)])
def test_constrained_rate_matches_bracketing_root_finder(eta, c, rho):
    res = optimize_keyrate_constrained(c, rho, eta)
    oracle = brentq(lambda b: rate.outage_probability(c, rho, b) - eta, 1e-9, 1 - 1e-9, xtol=1e-15)
    assert res.beta_star == pytest.approx(oracle, abs=1e-9)
    assert abs(rate.outage_probability(c, rho, res.beta_star) - eta) <= 1e-8
    assert res.objective_value == pytest.approx(rate.key_rate_M(c, rho, res.beta_star))
    assert abs(keyrate_grid_scan(c, rho, eta) - res.beta_star) <= 0.002


def test_constrained_rate_rejects_bad_targets():
    with pytest.raises(ValueError):
        optimize_keyrate_constrained(0.0, 10.0, 1.5)
    with pytest.raises(ValueError):
        optimize_throughput_grid(1.0, 10.0)


def test_table1_is_deterministic_and_complete():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rows = table1()
    assert len(rows) == 60
    assert rows == table1()
    assert rows[0] == (0.0, 5, 0.807, 0.74)
