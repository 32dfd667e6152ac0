import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaykey.pmf import Pmf, trim


def test_point_mass():
    p = Pmf.point(4)
    assert p.mean() == 4 and p.var() == 0 and p.max_value == 4
    assert p.prob(4) == 1.0 and p.prob(3) == 0.0


def test_rejects_bad_masses():
    with pytest.raises(ValueError):
        Pmf(0, [0.5, 0.6])
    with pytest.raises(ValueError):
        Pmf(0, [1.2, -0.2])
    with pytest.raises(ValueError):
        Pmf(0, [])


def test_vectorised_prob_outside_support():
    p = Pmf(-1, [0.25, 0.5, 0.25])
    assert np.allclose(p.prob([-3, -1, 0, 1, 5]), [0, 0.25, 0.5, 0.25, 0])


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=200))
def test_from_samples_matches_histogram(samples):
    p = Pmf.from_samples(samples)
    assert p.total() == pytest.approx(1.0)
    assert p.mean() == pytest.approx(np.mean(samples))


def test_tv_distance():
    a = Pmf(0, [0.5, 0.5])
    b = Pmf(1, [0.5, 0.5])
    assert a.tv_distance(b) == pytest.approx(0.5)
    assert a.tv_distance(a) == 0.0


def test_trim_drops_zero_edges():
    off, m = trim(3, np.array([0.0, 0.0, 0.4, 0.6, 0.0]))
    assert off == 5 and list(m) == [0.4, 0.6]
