"""Goodness of fit, leverage, standardized residuals and simulated envelopes."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from .errors import BetaselError, EnvelopeError, NumericError
from .links import _vec_mu_eta, link_eval
from .model import Dataset, FitResult, ModelSpec, design_matrix, fit, fitted_moments
from .special import RngStream, digamma, sample_beta, trigamma

MAX_ENVELOPE_FAILURES = 0.2


def null_spec(spec: ModelSpec) -> ModelSpec:
    """Intercept-only model in both submodels, with the links of ``spec``."""
    return ModelSpec((), (), spec.mean_link, spec.disp_link, True, True)


def pseudo_r2(data: Dataset, spec: ModelSpec, fit_result: FitResult,
              null_fit: FitResult | None = None) -> tuple:
    """Likelihood-ratio and squared-correlation pseudo R^2.

    ``r2_lr = 1 - exp(2 (l_null - l_fit) / n)``; ``r2_fc`` is the squared
    correlation between ``g(y)`` and the fitted mean predictor. The null
    model is fitted when not supplied.
    """
    if null_fit is None:
        null_fit = fit(data, null_spec(spec))
    n = data.n
    diff = null_fit.loglik - fit_result.loglik
    if diff > 0:
        warnings.warn("fitted log-likelihood is below the null model's; "
                      "the fit may not have converged", RuntimeWarning, stacklevel=2)
    r2_lr = 1.0 - math.exp(2.0 * diff / n)
    gy = link_eval(spec.mean_link, data.y)
    eta = design_matrix(data, spec.mean_cols, spec.intercept_mean) @ fit_result.theta_hat.beta
    if np.ptp(eta) == 0.0 or np.ptp(gy) == 0.0:
        r2_fc = 0.0
    else:
        r2_fc = float(np.corrcoef(gy, eta)[0, 1] ** 2)
    return float(r2_lr), min(r2_fc, 1.0)


def leverage(data: Dataset, spec: ModelSpec, fit_result: FitResult) -> np.ndarray:
    """Diagonal of ``M^{1/2} X (X'MX)^{-1} X' M^{1/2}`` with the Fisher weights of beta.

    ``M_t = phi_t^2 v_t (dmu/deta)_t^2``, so the diagonal sums to ``r``.
    """
    X = design_matrix(data, spec.mean_cols, spec.intercept_mean)
    mu, _, phi = fitted_moments(data, fit_result)
    eta = np.ascontiguousarray(X @ fit_result.theta_hat.beta)
    dmu = np.empty_like(eta)
    _vec_mu_eta(spec.mean_link.code, eta, dmu)
    v = trigamma(mu * phi) + trigamma((1.0 - mu) * phi)
    root = phi * np.sqrt(v) * np.abs(dmu)
    q, _ = np.linalg.qr(root[:, None] * X)
    return np.einsum("ij,ij->i", q, q)


def residuals_w2(data: Dataset, spec: ModelSpec, fit_result: FitResult) -> tuple:
    """Standardized weighted residuals ``(y*_t - mu*_t) / sqrt(v_t (1 - h_tt))``.

    ``y* = log(y / (1 - y))``, ``mu* = psi(mu phi) - psi((1 - mu) phi)`` and
    ``v = psi'(mu phi) + psi'((1 - mu) phi)``. Returns ``(residuals, leverage)``.
    """
    h = leverage(data, spec, fit_result)
    bad = np.flatnonzero(h >= 1.0 - 1e-12)
    if bad.size:
        raise NumericError("leverage equals one", index=int(bad[0]) + 1)
    mu, _, phi = fitted_moments(data, fit_result)
    p, q = mu * phi, (1.0 - mu) * phi
    ystar = np.log(data.y) - np.log1p(-data.y)
    mustar = digamma(p) - digamma(q)
    v = trigamma(p) + trigamma(q)
    res = (ystar - mustar) / np.sqrt(v * (1.0 - h))
    if not np.all(np.isfinite(res)):
        raise NumericError("residuals are not finite", index=int(np.flatnonzero(~np.isfinite(res))[0]) + 1)
    return res, h


def half_normal_quantiles(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return sps.ndtri((i + n - 0.125) / (2.0 * n + 0.5))


@dataclass(frozen=True, eq=False)
class Envelope:
    """Sorted absolute residuals against half-normal quantiles, with bands."""

    quantile: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    E_requested: int
    E_succeeded: int

    def inside_fraction(self) -> float:
        return float(np.mean((self.observed >= self.lower) & (self.observed <= self.upper)))

    def rows(self):
        for i in range(self.observed.size):
            yield (i + 1, float(self.quantile[i]), float(self.observed[i]),
                   float(self.lower[i]), float(self.median[i]), float(self.upper[i]))


def simulated_envelope(data: Dataset, spec: ModelSpec, fit_result: FitResult, E: int = 100,
                       seed: int = 0, *, stream: RngStream | None = None,
                       executor=None) -> Envelope:
    """Half-normal envelope of ``|r_w2|`` from ``E`` datasets simulated at the fit.

    Simulation ``e`` draws from ``stream.child(e)`` and is refit warm-started
    at the original estimate. Bands are the per-rank min, median and max.
    More than 20% failed refits raises :class:`EnvelopeError`.
    """
    if E < 1:
        raise EnvelopeError("E must be at least 1")
    if not fit_result.converged:
        raise EnvelopeError("envelope requires a converged fit")
    stream = stream or RngStream(seed)
    mu, _, phi = fitted_moments(data, fit_result)
    observed = np.sort(np.abs(residuals_w2(data, spec, fit_result)[0]))

    def one(e):
        ys = sample_beta(stream.child(e), mu * phi, (1.0 - mu) * phi)
        sim = data.with_response(ys)
        try:
            f = fit(sim, spec, start=fit_result.theta, check_rank=False)
            if not f.converged:
                return None
            return np.sort(np.abs(residuals_w2(sim, spec, f)[0]))
        except BetaselError:
            return None

    runs = list(map(one, range(E))) if executor is None else list(executor.map(one, range(E)))
    good = [r for r in runs if r is not None]
    failed = E - len(good)
    if not good or failed > MAX_ENVELOPE_FAILURES * E:
        raise EnvelopeError(f"{failed} of {E} envelope refits failed")
    stack = np.vstack(good)
    return Envelope(half_normal_quantiles(data.n), observed, stack.min(axis=0),
                    np.median(stack, axis=0), stack.max(axis=0), E, len(good))


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    r2_lr: float
    r2_fc: float
    residuals: np.ndarray
    leverage: np.ndarray
    envelope: Envelope | None = None


def diagnose(data: Dataset, spec: ModelSpec, fit_result: FitResult, *, envelope_E: int = 0,
             seed: int = 0, executor=None) -> DiagnosticsReport:
    r2_lr, r2_fc = pseudo_r2(data, spec, fit_result)
    res, h = residuals_w2(data, spec, fit_result)
    env = None
    if envelope_E:
        env = simulated_envelope(data, spec, fit_result, envelope_E, seed, executor=executor)
    return DiagnosticsReport(r2_lr, r2_fc, res, h, env)
