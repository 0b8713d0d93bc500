import numpy as np
import pytest
from scipy import stats

from betasel.errors import NumericError, SpecError, ValidationError
from betasel.links import LinkKind
from betasel.model import (Dataset, ModelSpec, fisher_info, fit, log_density, loglik, score,
                           split_theta, start_values)
from betasel.simulation import make_design, preset
from betasel.special import RngStream, sample_beta

LINKS = [k for k in LinkKind if k is not LinkKind.IDENTITY]


def numeric_grad(data, spec, theta, h=1e-5):
    out = np.empty_like(theta)
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = step
        out[i] = (loglik(data, spec, theta + e) - loglik(data, spec, theta - e)) / (2 * step)
    return out


def test_log_density_matches_scipy():
    y, mu, sigma = 0.3, 0.4, 0.2
    phi = (1 - sigma ** 2) / sigma ** 2
    assert log_density(y, mu, sigma) == pytest.approx(stats.beta.logpdf(y, mu * phi, (1 - mu) * phi),
                                                      rel=1e-12)


def test_loglik_is_sum_of_densities(food, food_spec):
    theta = np.array([-1.3, 0.29, -0.003, -2.5, 0.2])
    from betasel.model import fitted_moments, FitResult
    fr = FitResult(food_spec, split_theta(food_spec, theta), 0.0, np.eye(5), np.ones(5), True, 0, 0.0)
    mu, sigma, _ = fitted_moments(food, fr)
    assert loglik(food, food_spec, theta) == pytest.approx(log_density(food.y, mu, sigma).sum(), rel=1e-12)


@pytest.mark.parametrize("mean_link", LINKS)
@pytest.mark.parametrize("disp_link", LINKS)
def test_score_matches_finite_differences(mean_link, disp_link):
    rng = np.random.default_rng(hash((mean_link.value, disp_link.value)) % 2 ** 32)
    data = Dataset(rng.beta(4, 6, size=60), rng.random((60, 3)))
    spec = ModelSpec((0, 1), (0, 2), mean_link, disp_link)
    theta = np.concatenate([rng.normal(0, 0.3, 3), [-1.0], rng.normal(0, 0.3, 2)])
    g = score(data, spec, theta)
    fd = numeric_grad(data, spec, theta)
    assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_fisher_is_symmetric_positive_definite(food, food_spec):
    K = fisher_info(food, food_spec, np.array([-1.3, 0.29, -0.003, -2.5, 0.2]))
    assert np.allclose(K, K.T)
    assert np.all(np.linalg.eigvalsh(K) > 0)


def test_fisher_cross_block_sign_against_simulation():
    """Monte Carlo E[U U'] agrees with the information within 4 standard errors."""
    dgp = preset("model7")
    X = make_design(40, 3, seed=3)
    spec = ModelSpec((0, 1), (0, 1))
    theta = np.array(dgp.beta_true + dgp.gamma_true)
    mu, sig = dgp.moments(X)
    phi = (1 - sig ** 2) / sig ** 2
    Y = sample_beta(RngStream(9), mu * phi, (1 - mu) * phi, size=(40_000, 40))
    S = np.array([score(Dataset(y, X[:, 1:]), spec, theta) for y in Y])
    prods = S[:, :, None] * S[:, None, :]
    M = prods.mean(axis=0)
    se = prods.std(axis=0) / np.sqrt(len(S))
    K = fisher_info(Dataset(Y[0], X[:, 1:]), spec, theta)
    assert np.all(np.abs(M - K) <= 4 * se)
    flipped = K.copy()
    flipped[:3, 3:] *= -1
    flipped[3:, :3] *= -1
    assert np.any(np.abs(M - flipped) > 4 * se)


def test_food_fit_converges(food, food_spec):
    res = fit(food, food_spec)
    assert res.converged
    assert res.grad_norm <= 1e-8 * abs(res.loglik)
    assert np.all(np.isfinite(res.std_errors))
    assert res.loglik >= res.start_loglik


def test_refit_from_optimum_takes_no_iterations(food, food_spec):
    res = fit(food, food_spec)
    again = fit(food, food_spec, start=res.theta)
    assert again.iterations == 0 and again.converged
    assert again.loglik == res.loglik


def test_nested_deviance_non_increasing():
    rng = np.random.default_rng(4)
    data = Dataset(rng.beta(2, 5, size=80), rng.random((80, 4)))
    devs = [-2 * fit(data, ModelSpec(tuple(range(r)), ())).loglik for r in range(5)]
    assert all(b <= a + 1e-7 for a, b in zip(devs, devs[1:]))


def test_unbounded_likelihood_reported_not_raised():
    # 12 parameters on 14 points: the dispersion can collapse onto single observations
    rng = np.random.default_rng(0)
    data = Dataset(rng.beta(3, 3, size=14), rng.random((14, 5)))
    res = fit(data, ModelSpec(tuple(range(5)), tuple(range(5))))
    assert isinstance(res.converged, bool)


def test_constant_dispersion_identity_link():
    rng = np.random.default_rng(2)
    data = Dataset(rng.beta(2, 3, size=100), rng.random((100, 1)))
    res = fit(data, ModelSpec.constant_dispersion((0,)))
    assert res.converged
    assert 0 < res.theta_hat.gamma[0] < 1


def test_start_values_shape(food, food_spec):
    assert start_values(food, food_spec).shape == (food_spec.k,)


def test_dataset_validation():
    with pytest.raises(ValidationError, match="row 2"):
        Dataset([0.5, 1.0, 0.2], np.zeros((3, 1)))
    with pytest.raises(ValidationError):
        Dataset([], np.zeros((0, 1)))
    with pytest.raises(ValidationError):
        Dataset([0.5, 0.4], np.zeros((3, 1)))
    d = Dataset([0.5, 0.4], np.zeros((2, 2)))
    assert d.names == ("x2", "x3")
    with pytest.raises(ValueError):
        d.y[0] = 0.1


def test_spec_validation():
    with pytest.raises(SpecError):
        ModelSpec((), (), intercept_mean=False)
    with pytest.raises(SpecError):
        ModelSpec((0,), (0,), LinkKind.LOGIT, LinkKind.IDENTITY)
    with pytest.raises(SpecError):
        fit(Dataset([0.5, 0.4, 0.3], np.ones((3, 1))), ModelSpec((0,), (0,)))


def test_loglik_non_finite_names_observation():
    data = Dataset([0.5, 0.4, 0.3], np.array([[0.0], [1.0], [2.0]]))
    spec = ModelSpec.constant_dispersion((0,))
    with pytest.raises(NumericError):
        loglik(data, spec, np.array([0.0, 0.0, 1.5]))
