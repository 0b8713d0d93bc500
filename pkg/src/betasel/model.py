"""Varying-dispersion beta regression.

The response ``y_t`` follows a beta law with mean ``mu_t`` and dispersion
``sigma_t`` (variance ``mu_t (1 - mu_t) sigma_t^2``), where ``g(mu_t) = x_t'beta``
and ``h(sigma_t) = z_t'gamma``. Beta shapes are ``mu phi`` and
``(1 - mu) phi`` with ``phi = (1 - sigma^2) / sigma^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .errors import DomainError, NumericError, SpecError, ValidationError
from .links import LinkKind, _vec_mu_eta, link_eval, link_inverse
from .special import log_gamma


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response in (0, 1) and a matrix of named candidate covariates.

    The intercept is never stored as a column; specs request it by flag.
    """

    y: np.ndarray
    columns: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols.reshape(-1, 1) if cols.size else np.empty((y.size, 0))
        cols = np.ascontiguousarray(cols)
        if y.size < 1:
            raise ValidationError("dataset has no observations")
        if cols.shape[0] != y.size:
            raise ValidationError(
                f"covariate matrix has {cols.shape[0]} rows but y has {y.size}")
        bad = np.flatnonzero(~((y > 0) & (y < 1)))
        if bad.size:
            raise ValidationError(f"response must lie strictly inside (0, 1); row {bad[0] + 1} is {y[bad[0]]!r}")
        if not np.all(np.isfinite(cols)):
            raise ValidationError("covariates must be finite")
        names = tuple(self.names) or tuple(f"x{j + 2}" for j in range(cols.shape[1]))
        if len(names) != cols.shape[1]:
            raise ValidationError("one name per covariate column is required")
        if len(set(names)) != len(names):
            raise ValidationError("covariate names must be unique")
        y.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.y.size

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown column {name!r}") from None

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.columns[rows], self.names)

    def with_response(self, y) -> "Dataset":
        return Dataset(y, self.columns, self.names)


@dataclass(frozen=True)
class ModelSpec:
    """Which covariates enter each submodel, and through which links."""

    mean_cols: tuple = ()
    disp_cols: tuple = ()
    mean_link: LinkKind = LinkKind.LOGIT
    disp_link: LinkKind = LinkKind.LOGIT
    intercept_mean: bool = True
    intercept_disp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mean_cols", tuple(int(c) for c in self.mean_cols))
        object.__setattr__(self, "disp_cols", tuple(int(c) for c in self.disp_cols))
        object.__setattr__(self, "mean_link", LinkKind.parse(self.mean_link))
        object.__setattr__(self, "disp_link", LinkKind.parse(self.disp_link))
        if self.r < 1 or self.s < 1:
            raise SpecError("each submodel needs at least one regressor")
        if self.mean_link is LinkKind.IDENTITY:
            raise SpecError("identity link is only allowed for constant dispersion")
        if self.disp_link is LinkKind.IDENTITY and not self.is_constant_dispersion:
            raise SpecError("identity dispersion link requires an intercept-only dispersion submodel")

    @classmethod
    def constant_dispersion(cls, mean_cols=(), mean_link=LinkKind.LOGIT, intercept_mean=True):
        return cls(mean_cols, (), mean_link, LinkKind.IDENTITY, intercept_mean, True)

    @property
    def r(self) -> int:
        return len(self.mean_cols) + int(self.intercept_mean)

    @property
    def s(self) -> int:
        return len(self.disp_cols) + int(self.intercept_disp)

    @property
    def k(self) -> int:
        return self.r + self.s

    @property
    def is_constant_dispersion(self) -> bool:
        return not self.disp_cols and self.intercept_disp

    def describe(self, names=None) -> dict:
        def label(cols, intercept):
            out = ["(intercept)"] if intercept else []
            return out + [names[c] if names else int(c) for c in cols]

        return {
            "mean": label(self.mean_cols, self.intercept_mean),
            "dispersion": label(self.disp_cols, self.intercept_disp),
            "mean_link": self.mean_link.value,
            "disp_link": self.disp_link.value,
        }


@dataclass(frozen=True)
class ParamVector:
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])


@dataclass(frozen=True, eq=False)
class FitResult:
    spec: ModelSpec
    theta_hat: ParamVector
    loglik: float
    fisher: np.ndarray
    std_errors: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    start_loglik: float = math.nan
    n: int = 0

    @property
    def theta(self) -> np.ndarray:
        return self.theta_hat.theta

    @property
    def k(self) -> int:
        return self.spec.k

    def summary(self) -> dict:
        return {
            "beta": self.theta_hat.beta.tolist(),
            "gamma": self.theta_hat.gamma.tolist(),
            "std_errors": self.std_errors.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
        }


@dataclass
class _Prepared:
    """Design matrices and response transforms in the layout the kernels want."""

    y: np.ndarray
    ly: np.ndarray
    l1y: np.ndarray
    ys: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    ml: int
    dl: int
    ones: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, data: Dataset, spec: ModelSpec, check_rank=False):
        X = design_matrix(data, spec.mean_cols, spec.intercept_mean)
        Z = design_matrix(data, spec.disp_cols, spec.intercept_disp)
        if check_rank:
            for name, M in (("mean", X), ("dispersion", Z)):
                if np.linalg.matrix_rank(M) < M.shape[1]:
                    raise SpecError(f"{name} design matrix is rank deficient")
        y = data.y
        ly = np.log(y)
        l1y = np.log1p(-y)
        return cls(y, ly, l1y, ly - l1y, X, Z, spec.mean_link.code,
                   spec.disp_link.code, np.ones(y.size))


def design_matrix(data: Dataset, cols, intercept: bool) -> np.ndarray:
    parts = [np.ones((data.n, 1))] if intercept else []
    for c in cols:
        if not 0 <= c < data.columns.shape[1]:
            raise SpecError(f"column index {c} out of range")
        parts.append(data.columns[:, [c]])
    return np.ascontiguousarray(np.hstack(parts))


def _theta_array(spec: ModelSpec, theta) -> np.ndarray:
    if isinstance(theta, ParamVector):
        theta = theta.theta
    theta = np.ascontiguousarray(theta, dtype=float).ravel()
    if theta.size != spec.k:
        raise SpecError(f"parameter vector has length {theta.size}, spec needs {spec.k}")
    return theta


def split_theta(spec: ModelSpec, theta) -> ParamVector:
    theta = np.asarray(theta, dtype=float)
    return ParamVector(theta[:spec.r].copy(), theta[spec.r:].copy())


def log_density(y, mu, sigma):
    """Beta log-density in the mean/dispersion parameterization."""
    y, mu, sigma = (np.asarray(a, dtype=float) for a in (y, mu, sigma))
    for name, a in (("y", y), ("mu", mu), ("sigma", sigma)):
        if not np.all((a > 0) & (a < 1)):
            raise DomainError(f"{name} must lie strictly inside (0, 1)")
    phi = (1.0 - sigma ** 2) / sigma ** 2
    p, q = mu * phi, (1.0 - mu) * phi
    out = (log_gamma(phi) - log_gamma(p) - log_gamma(q)
           + (p - 1.0) * np.log(y) + (q - 1.0) * np.log1p(-y))
    return float(out) if np.ndim(out) == 0 else out


def loglik(data: Dataset, spec: ModelSpec, theta) -> float:
    """Log-likelihood of ``theta`` on ``data``."""
    theta = _theta_array(spec, theta)
    P = _Prepared.build(data, spec)
    out = np.empty(data.n)
    kern.logdens_obs(theta, P.y, P.ly, P.l1y, P.X, P.Z, P.ml, P.dl, out)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NumericError("log-likelihood is not finite", index=int(bad[0]) + 1)
    return float(out.sum())


def score(data: Dataset, spec: ModelSpec, theta) -> np.ndarray:
    """Analytic gradient of :func:`loglik`, ordered (beta, gamma)."""
    theta = _theta_array(spec, theta)
    P = _Prepared.build(data, spec)
    grad = np.empty(spec.k)
    kern.score_into(theta, P.ones, P.y, P.ly, P.l1y, P.ys, P.X, P.Z, P.ml, P.dl, grad)
    if not np.all(np.isfinite(grad)):
        raise NumericError("score is not finite")
    return grad


def fisher_info(data: Dataset, spec: ModelSpec, theta) -> np.ndarray:
    """Expected (Fisher) information matrix at ``theta``."""
    theta = _theta_array(spec, theta)
    P = _Prepared.build(data, spec)
    return kern.fisher(theta, P.ones, P.X, P.Z, P.ml, P.dl)


def start_values(data: Dataset, spec: ModelSpec) -> np.ndarray:
    """Least-squares start for beta; moment-based start for the dispersion.

    ``beta0`` regresses ``g(y)`` on the mean design. The dispersion start uses
    the residual variance on the link scale to estimate ``sigma^2`` (clamped to
    [0.05, 0.95]) and puts ``h(sigma0)`` on the dispersion intercept.
    """
    P = _Prepared.build(data, spec)
    gy = link_eval(spec.mean_link, data.y)
    beta0, *_ = np.linalg.lstsq(P.X, gy, rcond=None)
    eta = P.X @ beta0
    mu = link_inverse(spec.mean_link, eta)
    dof = max(data.n - spec.r, 1)
    resid_var = float(np.sum((gy - eta) ** 2)) / dof
    # var(g(y)) ~ g'(mu)^2 var(y) = g'(mu)^2 mu(1-mu) sigma^2
    mu_eta = np.empty(data.n)
    _vec_mu_eta(spec.mean_link.code, np.ascontiguousarray(eta), mu_eta)
    var_y = resid_var * mu_eta ** 2
    sigma2 = float(np.mean(var_y / (mu * (1.0 - mu))))
    sigma2 = min(max(sigma2, 0.05), 0.95)
    gamma0 = np.zeros(spec.s)
    if spec.intercept_disp:
        gamma0[0] = link_eval(spec.disp_link, math.sqrt(sigma2))
    return np.concatenate([beta0, gamma0])


def fit(data: Dataset, spec: ModelSpec, *, start=None, maxit: int = 500,
        tol: float = 1e-8, step_tol: float = 1e-10, check_rank: bool = True) -> FitResult:
    """Maximum-likelihood fit by BFGS with analytic score.

    ``tol`` is relative: the fit is declared converged once the largest
    absolute score component is below ``tol * max(1, |loglik|)`` and the
    information matrix at the optimum is positive definite. Non-convergence is
    reported through ``converged=False``, never raised.
    """
    if data.n <= spec.k:
        raise SpecError(f"need more observations ({data.n}) than parameters ({spec.k})")
    P = _Prepared.build(data, spec, check_rank=check_rank)
    theta0 = start_values(data, spec) if start is None else _theta_array(spec, start)
    return _fit_prepared(P, spec, theta0, maxit, tol, step_tol)


def _fit_prepared(P: _Prepared, spec, theta0, maxit=500, tol=1e-8, step_tol=1e-10):
    empty = np.empty((0, 0))
    theta, ll, gmax, iters, ok, ll0 = kern.bfgs(
        np.ascontiguousarray(theta0, dtype=float), empty, P.ones, P.y, P.ly, P.l1y,
        P.ys, P.X, P.Z, P.ml, P.dl, maxit, tol, step_tol)
    K = kern.fisher(theta, P.ones, P.X, P.Z, P.ml, P.dl)
    cov = np.empty_like(K)
    pd = bool(np.all(np.isfinite(K))) and kern.cholesky_inverse(K, cov)
    if pd:
        se = np.sqrt(np.diag(cov))
    else:
        se = np.full(spec.k, np.nan)
    return FitResult(
        spec=spec,
        theta_hat=split_theta(spec, theta),
        loglik=float(ll),
        fisher=K,
        std_errors=se,
        converged=bool(ok and pd and np.isfinite(ll)),
        iterations=int(iters),
        grad_norm=float(gmax),
        start_loglik=float(ll0),
        n=P.y.size,
    )


def fitted_moments(data: Dataset, fit_result: FitResult):
    """Fitted ``(mu, sigma, phi)`` per observation."""
    spec = fit_result.spec
    X = design_matrix(data, spec.mean_cols, spec.intercept_mean)
    Z = design_matrix(data, spec.disp_cols, spec.intercept_disp)
    mu = link_inverse(spec.mean_link, X @ fit_result.theta_hat.beta)
    sigma = link_inverse(spec.disp_link, Z @ fit_result.theta_hat.gamma)
    sigma = np.atleast_1d(sigma)
    phi = (1.0 - sigma ** 2) / sigma ** 2
    return np.atleast_1d(mu), sigma, phi
