import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from betasel.errors import DomainError
from betasel.special import RngStream, digamma, log_gamma, sample_beta, trigamma

mpmath.mp.dps = 40
GRID = np.concatenate([np.geomspace(1e-6, 1e6, 121), [0.5, 1.0, 2.0, 10.3, 7.7]])


def test_log_gamma_known_values():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-15)


@pytest.mark.parametrize("u", GRID)
def test_log_gamma_against_mpmath(u):
    assert abs(log_gamma(u) - float(mpmath.loggamma(u))) <= 1e-12 * max(1.0, 1e-3 * abs(log_gamma(u)))


def test_log_gamma_abs_error_small_args():
    # absolute bound for the moderate range where |log Gamma| is O(1..100)
    for u in np.geomspace(1e-6, 50, 60):
        assert abs(log_gamma(u) - float(mpmath.loggamma(u))) <= 1e-12


@pytest.mark.parametrize("u", np.geomspace(1e-4, 1e6, 101))
def test_digamma_trigamma_against_mpmath(u):
    assert digamma(u) == pytest.approx(float(mpmath.digamma(u)), rel=1e-10, abs=1e-300)
    assert trigamma(u) == pytest.approx(float(mpmath.polygamma(1, u)), rel=1e-10)


def test_digamma_one_is_minus_euler():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-15)


def test_digamma_matches_finite_difference():
    h = 1e-5
    fd = (log_gamma(7.7 + h) - log_gamma(7.7 - h)) / (2 * h)
    assert abs(digamma(7.7) - fd) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e4))
def test_recurrences(u):
    assert digamma(u + 1) - digamma(u) == pytest.approx(1.0 / u, rel=1e-10)
    assert trigamma(u) - trigamma(u + 1) == pytest.approx(1.0 / u ** 2, rel=1e-9)
    assert trigamma(u) > 0


@pytest.mark.parametrize("fn", [log_gamma, digamma, trigamma])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_domain_errors(fn, bad):
    with pytest.raises(DomainError):
        fn(bad)


def test_array_inputs_keep_shape():
    u = np.array([[0.5, 1.0], [2.0, 3.0]])
    assert digamma(u).shape == (2, 2)
    assert isinstance(trigamma(2.0), float)


def test_stream_determinism_and_independence():
    a = RngStream(42, (3, 1)).generator.random(5)
    b = RngStream(42, (3, 1)).generator.random(5)
    c = RngStream(42, (3, 2)).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert RngStream(42).child(3, 1).stream_id == (3, 1)


def test_sample_beta_moments():
    s = RngStream(1)
    draws = sample_beta(s, 2.0, 6.0, size=200_000)
    assert draws.mean() == pytest.approx(0.25, abs=4 * math.sqrt(0.25 * 0.75 / 9 / 200_000))
    assert np.all((draws > 0) & (draws < 1))


def test_sample_beta_rejects_bad_shapes():
    with pytest.raises(DomainError):
        sample_beta(RngStream(0), -1.0, 1.0)
