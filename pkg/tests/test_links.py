import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from betasel.errors import DomainError
from betasel.links import LinkKind, link_deriv, link_eval, link_inverse

UNIT_LINKS = [k for k in LinkKind if k is not LinkKind.IDENTITY]


@pytest.mark.parametrize("kind", UNIT_LINKS)
def test_known_points(kind):
    # every link except the skewed ones maps 1/2 to 0
    if kind in (LinkKind.LOGIT, LinkKind.PROBIT, LinkKind.CAUCHY):
        assert link_eval(kind, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert link_inverse(kind, link_eval(kind, 0.3)) == pytest.approx(0.3, rel=1e-12)


def test_conventions():
    m = 0.2
    assert link_eval("loglog", m) == pytest.approx(-np.log(-np.log(m)))
    assert link_eval("cloglog", m) == pytest.approx(np.log(-np.log1p(-m)))
    assert link_deriv("logit", m) == pytest.approx(1.0 / (m * (1 - m)))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(UNIT_LINKS), st.floats(1e-12, 1 - 1e-12))
def test_mu_eta_mu_round_trip(kind, m):
    assert abs(link_inverse(kind, link_eval(kind, m)) - m) <= 1e-9


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(UNIT_LINKS), st.floats(-30.0, 30.0))
def test_eta_mu_eta_round_trip(kind, eta):
    m = link_inverse(kind, eta)
    # only where the inverse is not flattened below double-precision resolution
    assume(1e-12 < m < 1 - 1e-12 and 1.0 / link_deriv(kind, m) >= 1e-5)
    assert abs(link_eval(kind, m) - eta) <= 1e-10


def test_inverse_examples():
    assert link_inverse("logit", 0.0) == 0.5
    assert link_inverse("cauchy", 1.0) == pytest.approx(0.75, abs=1e-15)
    assert link_eval("probit", 0.8413447460685429) == pytest.approx(1.0, abs=1e-12)
    assert link_eval("cloglog", 1 - np.exp(-1)) == pytest.approx(0.0, abs=1e-15)
    assert link_deriv("identity", 0.3) == 1.0


@pytest.mark.parametrize("kind", UNIT_LINKS)
def test_monotone(kind):
    grid = np.linspace(1e-6, 1 - 1e-6, 1001)
    assert np.all(np.diff(link_eval(kind, grid)) > 0)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(UNIT_LINKS), st.floats(0.01, 0.99))
def test_derivative_matches_finite_difference(kind, m):
    h = 1e-6
    fd = (link_eval(kind, m + h) - link_eval(kind, m - h)) / (2 * h)
    assert link_deriv(kind, m) == pytest.approx(fd, rel=1e-6)


def test_inverse_saturates():
    assert link_inverse("logit", 800.0) == 1 - 1e-12
    assert link_inverse("logit", -800.0) == 1e-12


@pytest.mark.parametrize("m", [0.0, 1.0, -0.1, np.nan])
def test_domain(m):
    with pytest.raises(DomainError):
        link_eval("logit", m)


def test_unknown_link():
    with pytest.raises(DomainError):
        LinkKind.parse("tanh")
