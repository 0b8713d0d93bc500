"""Model-selection criteria: penalized likelihood and bootstrapped likelihood.

Every criterion is "smaller is better" and is built from ``-2 * loglik`` plus
either a closed-form penalty or a bootstrap estimate of the optimism.

Bootstrap criteria work on a :class:`Replicates` bundle, so one set of
refits can serve several criteria of the same resampling mode.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .errors import ConvergenceError, DegenerateSampleError, DomainError, QuorumError
from .model import Dataset, FitResult, ModelSpec, _Prepared, fitted_moments
from .special import RngStream, sample_beta

PARAMETRIC = "parametric"
NONPARAMETRIC = "nonparametric"
WEIGHT_IN_SAMPLE = 0.368
WEIGHT_BOOT = 0.632


class CriterionKind(enum.Enum):
    AIC = "aic"
    AICC = "aicc"
    SIC = "sic"
    SICC = "sicc"
    HQ = "hq"
    HQC = "hqc"
    EIC1P = "eic1p"
    EIC2P = "eic2p"
    EIC3P = "eic3p"
    EIC4P = "eic4p"
    EIC5P = "eic5p"
    EIC1NP = "eic1np"
    EIC2NP = "eic2np"
    EIC3NP = "eic3np"
    EIC4NP = "eic4np"
    EIC5NP = "eic5np"
    BCV = "bcv"
    CV632 = "632cv"
    BQCV = "bqcv"
    QCV632 = "632qcv"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def is_classic(self) -> bool:
        return self in _CLASSIC

    @property
    def mode(self):
        """Resampling mode the criterion needs, or ``None`` for classic ones."""
        if self.is_classic:
            return None
        if self in (CriterionKind.BCV, CriterionKind.CV632) or self.value.endswith("np"):
            return NONPARAMETRIC
        return PARAMETRIC

    @property
    def eic_variant(self):
        if self.value.startswith("eic"):
            return int(self.value[3])
        return None

    @classmethod
    def parse(cls, value) -> "CriterionKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for kind in cls:
            if text in (kind.value, kind.name.lower(), kind.label.lower()):
                return kind
        raise DomainError(f"unknown criterion {value!r}")

    @classmethod
    def parse_list(cls, values) -> list:
        """Parse names (or ``"all"``) into a de-duplicated list in canonical order."""
        if isinstance(values, (str, CriterionKind)):
            values = [values]
        out = set()
        for v in values:
            if isinstance(v, str) and v.strip().lower() == "all":
                out.update(cls)
            else:
                out.add(cls.parse(v))
        return [k for k in cls if k in out]


_CLASSIC = frozenset({CriterionKind.AIC, CriterionKind.AICC, CriterionKind.SIC,
                      CriterionKind.SICC, CriterionKind.HQ, CriterionKind.HQC})
_LABELS = {k: k.name for k in CriterionKind}
_LABELS.update({
    CriterionKind.AICC: "AICc", CriterionKind.SICC: "SICc", CriterionKind.HQC: "HQc",
    CriterionKind.CV632: "632CV", CriterionKind.QCV632: "632QCV",
})
for _v in range(1, 6):
    _LABELS[CriterionKind(f"eic{_v}p")] = f"EIC{_v}p"
    _LABELS[CriterionKind(f"eic{_v}np")] = f"EIC{_v}np"


@dataclass(frozen=True)
class CriterionReport:
    kind: CriterionKind
    value: float
    W_requested: int = 0
    W_succeeded: int = 0
    bias_term: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "criterion": self.kind.label,
            "value": self.value,
            "W_requested": self.W_requested,
            "W_succeeded": self.W_succeeded,
            "bias_term": self.bias_term,
            "seed": self.seed,
        }


def classic_criterion(kind, loglik: float, k: int, n: int) -> float:
    """Penalized-likelihood criteria with ``k`` parameters and ``n`` observations."""
    kind = CriterionKind.parse(kind)
    if not kind.is_classic:
        raise DomainError(f"{kind.label} is not a closed-form criterion")
    dev = -2.0 * loglik
    if kind is CriterionKind.AIC:
        return dev + 2.0 * k
    if kind is CriterionKind.AICC:
        den = n - k - 1
        if den <= 0:
            raise DegenerateSampleError(f"AICc needs n > k + 1 (n={n}, k={k})")
        return dev + 2.0 * k + 2.0 * k * (k + 1) / den
    if kind in (CriterionKind.SIC, CriterionKind.HQ):
        if n < 2 or (kind is CriterionKind.HQ and n < 3):
            raise DegenerateSampleError(f"{kind.label} needs a larger sample (n={n})")
    if kind is CriterionKind.SIC:
        return dev + k * math.log(n)
    if kind is CriterionKind.HQ:
        return dev + 2.0 * k * math.log(math.log(n))
    den = n - k - 2
    if den <= 0 or n < 3:
        raise DegenerateSampleError(f"{kind.label} needs n > k + 2 (n={n}, k={k})")
    if kind is CriterionKind.SICC:
        return dev + k * math.log(n) * n / den
    return dev + 2.0 * k * math.log(math.log(n)) * n / den


@dataclass(frozen=True, eq=False)
class Replicates:
    """Refits of one model on ``W`` bootstrap samples.

    ``samples`` holds the pseudo-responses (parametric, ``W x n``) or the
    per-row draw counts (nonparametric, ``W x n``). The log-likelihood arrays
    follow the notation ``theta*`` = replicate estimate, ``theta_hat`` =
    original estimate:

    ``ll_ss``  loglik of the replicate sample at ``theta*``
    ``ll_sh``  loglik of the replicate sample at ``theta_hat``
    ``ll_os``  loglik of the original sample at ``theta*``
    ``ll_out`` loglik of the never-drawn rows at ``theta*`` (nonparametric)
    """

    mode: str
    samples: np.ndarray
    thetas: np.ndarray
    converged: np.ndarray
    ll_ss: np.ndarray
    ll_sh: np.ndarray
    ll_os: np.ndarray
    ll_out: np.ndarray | None
    loglik_hat: float
    n: int
    seed: int | None = None
    redraws: int = 0

    @property
    def W_requested(self) -> int:
        return int(self.converged.size)

    @property
    def W_succeeded(self) -> int:
        return int(np.count_nonzero(self.ok))

    @property
    def ok(self) -> np.ndarray:
        good = self.converged & np.isfinite(self.ll_ss) & np.isfinite(self.ll_sh) & np.isfinite(self.ll_os)
        if self.ll_out is not None:
            good &= np.isfinite(self.ll_out)
        return good

    def sample(self, data: Dataset, i: int) -> Dataset:
        """The ``i``-th bootstrap dataset."""
        if self.mode == PARAMETRIC:
            return data.with_response(self.samples[i])
        rows = np.repeat(np.arange(self.n), self.samples[i].astype(np.int64))
        return data.take(rows)

    def quorum(self, quorum: int | None = None) -> np.ndarray:
        """Mask of usable replicates; raises if fewer than the quorum succeeded."""
        need = math.ceil(self.W_requested / 2) if quorum is None else int(quorum)
        ok = self.ok
        got = int(np.count_nonzero(ok))
        if got == 0 or got < need:
            raise QuorumError(f"only {got} of {self.W_requested} bootstrap refits succeeded (need {need})")
        return ok


def _draw_counts(gen: np.random.Generator, n: int, W: int, require_holdout: bool):
    counts = np.empty((W, n))
    redraws = 0
    budget = 10 * W
    for b in range(W):
        while True:
            c = np.bincount(gen.integers(0, n, size=n), minlength=n)
            if not require_holdout or np.any(c == 0):
                break
            redraws += 1
            if redraws > budget:
                raise QuorumError(f"no held-out rows after {budget} redraws (n={n})")
        counts[b] = c
    return counts, redraws


def _as_stream(seed, stream):
    if stream is not None:
        return stream
    return RngStream(0 if seed is None else seed)


def bootstrap_replicates(data: Dataset, spec: ModelSpec, fit0: FitResult, mode: str,
                         W: int, seed=None, *, stream: RngStream | None = None,
                         samples=None, require_holdout: bool = True,
                         maxit: int = 500, tol: float = 1e-8,
                         step_tol: float = 1e-10) -> Replicates:
    """Draw ``W`` bootstrap samples and refit ``spec`` on each, warm-started at ``fit0``.

    Parameters
    ----------
    mode : {"parametric", "nonparametric"}
        Parametric draws ``y*_t ~ Beta(mu_t phi_t, (1 - mu_t) phi_t)`` at the
        fitted moments with covariates held fixed; nonparametric resamples
        whole rows with replacement.
    seed, stream
        Randomness comes from ``stream`` if given, else from ``RngStream(seed)``.
    samples : array, optional
        Pre-drawn ``W x n`` pseudo-responses (parametric) or row counts
        (nonparametric). Bypasses the generator; used for replay and tests.
    require_holdout : bool
        Nonparametric only. Redraw samples that contain every row, so each
        replicate has a non-empty held-out set (at most ``10 * W`` redraws).
    """
    if mode not in (PARAMETRIC, NONPARAMETRIC):
        raise DomainError(f"unknown bootstrap mode {mode!r}")
    if not fit0.converged:
        raise ConvergenceError("bootstrap requires a converged original fit")
    if W < 1:
        raise DomainError("W must be at least 1")
    P = _Prepared.build(data, spec)
    n = data.n
    theta_hat = np.ascontiguousarray(fit0.theta)
    H0 = np.empty_like(fit0.fisher)
    if not kern.cholesky_inverse(np.ascontiguousarray(fit0.fisher), H0):
        raise ConvergenceError("information matrix of the original fit is singular")
    redraws = 0
    st = None
    if samples is None:
        st = _as_stream(seed, stream)
        gen = st.generator
        if mode == PARAMETRIC:
            mu, _, phi = fitted_moments(data, fit0)
            samples = sample_beta(st, mu * phi, (1.0 - mu) * phi, size=(W, n))
        else:
            samples, redraws = _draw_counts(gen, n, W, require_holdout)
    samples = np.ascontiguousarray(samples, dtype=float)
    if samples.shape != (W, n):
        raise DomainError(f"samples must have shape ({W}, {n})")
    if mode == PARAMETRIC:
        if not np.all((samples > 0) & (samples < 1)):
            raise DomainError("pseudo-responses must lie inside (0, 1)")
        thetas, conv, ll_ss, ll_sh, ll_os = kern.parametric_replicates(
            theta_hat, H0, samples, P.y, P.ly, P.l1y, P.X, P.Z, P.ml, P.dl,
            maxit, tol, step_tol)
        ll_out = None
    else:
        if np.any(samples < 0) or np.any(samples != np.round(samples)):
            raise DomainError("row counts must be non-negative integers")
        thetas, conv, ll_ss, ll_sh, ll_os, ll_out = kern.case_replicates(
            theta_hat, H0, samples, P.y, P.ly, P.l1y, P.ys, P.X, P.Z, P.ml, P.dl,
            maxit, tol, step_tol)
    used_seed = st.master_seed if st is not None else seed
    return Replicates(mode, samples, thetas, conv, ll_ss, ll_sh, ll_os, ll_out,
                      float(fit0.loglik), n, used_seed, redraws)


def eic_bias(reps: Replicates, variant: int, quorum=None) -> float:
    """Bootstrap estimate ``B_v`` of the optimism of ``-2 * loglik``."""
    ok = reps.quorum(quorum)
    ss, sh, os_ = reps.ll_ss[ok], reps.ll_sh[ok], reps.ll_os[ok]
    hat = reps.loglik_hat
    if variant == 1:
        terms = 2.0 * ss - 2.0 * os_
    elif variant == 2:
        terms = 2.0 * (2.0 * hat - 2.0 * os_)
    elif variant == 3:
        terms = 2.0 * (2.0 * ss - 2.0 * sh)
    elif variant == 4:
        terms = 2.0 * (2.0 * sh - 2.0 * os_)
    elif variant == 5:
        terms = 2.0 * (2.0 * ss - 2.0 * hat)
    else:
        raise DomainError(f"EIC variant must be 1..5, got {variant}")
    return float(np.mean(terms))


def _report(kind, value, reps, bias=None):
    return CriterionReport(kind, float(value), reps.W_requested, reps.W_succeeded, bias, reps.seed)


def _replicates_for(mode, data, spec, fit0, W, seed, replicates, **kw):
    if replicates is not None:
        if replicates.mode != mode:
            raise DomainError(f"criterion needs {mode} replicates, got {replicates.mode}")
        return replicates
    return bootstrap_replicates(data, spec, fit0, mode, W, seed, **kw)


def eic(data, spec, fit0, variant: int, mode: str, W: int = 200, seed=None, *,
        replicates: Replicates | None = None, quorum=None, **kw) -> CriterionReport:
    """``EIC_v = -2 loglik + B_v`` under parametric or nonparametric resampling."""
    reps = _replicates_for(mode, data, spec, fit0, W, seed, replicates, **kw)
    bias = eic_bias(reps, variant, quorum)
    kind = CriterionKind(f"eic{variant}{'p' if mode == PARAMETRIC else 'np'}")
    return _report(kind, -2.0 * fit0.loglik + bias, reps, bias)


def bcv_value(reps: Replicates, quorum=None) -> float:
    """Average of ``-2 * loglik(held-out rows) * n / m*`` over replicates."""
    if reps.mode != NONPARAMETRIC:
        raise DomainError("BCV needs nonparametric replicates")
    held = np.count_nonzero(reps.samples == 0, axis=1)
    ok = reps.quorum(quorum) & (held > 0)
    if np.count_nonzero(ok) == 0:
        raise QuorumError("no replicate has held-out rows")
    return float(np.mean(-2.0 * reps.ll_out[ok] * reps.n / held[ok]))


def bqcv_value(reps: Replicates, quorum=None) -> float:
    """Average of ``-2 * loglik(original sample | theta*)`` over parametric replicates."""
    if reps.mode != PARAMETRIC:
        raise DomainError("BQCV needs parametric replicates")
    ok = reps.quorum(quorum)
    return float(np.mean(-2.0 * reps.ll_os[ok]))


def blend632(dev_hat: float, boot: float) -> float:
    return WEIGHT_IN_SAMPLE * dev_hat + WEIGHT_BOOT * boot


def bcv(data, spec, fit0, W: int = 200, seed=None, *, replicates=None, quorum=None, **kw):
    reps = _replicates_for(NONPARAMETRIC, data, spec, fit0, W, seed, replicates, **kw)
    return _report(CriterionKind.BCV, bcv_value(reps, quorum), reps)


def cv632(data, spec, fit0, W: int = 200, seed=None, *, replicates=None, quorum=None, **kw):
    reps = _replicates_for(NONPARAMETRIC, data, spec, fit0, W, seed, replicates, **kw)
    return _report(CriterionKind.CV632, blend632(-2.0 * fit0.loglik, bcv_value(reps, quorum)), reps)


def bqcv(data, spec, fit0, W: int = 200, seed=None, *, replicates=None, quorum=None, **kw):
    reps = _replicates_for(PARAMETRIC, data, spec, fit0, W, seed, replicates, **kw)
    return _report(CriterionKind.BQCV, bqcv_value(reps, quorum), reps)


def qcv632(data, spec, fit0, W: int = 200, seed=None, *, replicates=None, quorum=None, **kw):
    reps = _replicates_for(PARAMETRIC, data, spec, fit0, W, seed, replicates, **kw)
    return _report(CriterionKind.QCV632, blend632(-2.0 * fit0.loglik, bqcv_value(reps, quorum)), reps)


def from_replicates(kind, fit0: FitResult, replicates: Replicates | None,
                    quorum=None) -> CriterionReport:
    """Evaluate any criterion from a fit and (for bootstrap kinds) its replicates."""
    kind = CriterionKind.parse(kind)
    if kind.is_classic:
        value = classic_criterion(kind, fit0.loglik, fit0.k, fit0.n)
        return CriterionReport(kind, value)
    if replicates is None:
        raise DomainError(f"{kind.label} needs bootstrap replicates")
    if replicates.mode != kind.mode:
        raise DomainError(f"{kind.label} needs {kind.mode} replicates")
    dev = -2.0 * fit0.loglik
    v = kind.eic_variant
    if v is not None:
        bias = eic_bias(replicates, v, quorum)
        return _report(kind, dev + bias, replicates, bias)
    if kind is CriterionKind.BCV:
        return _report(kind, bcv_value(replicates, quorum), replicates)
    if kind is CriterionKind.CV632:
        return _report(kind, blend632(dev, bcv_value(replicates, quorum)), replicates)
    if kind is CriterionKind.BQCV:
        return _report(kind, bqcv_value(replicates, quorum), replicates)
    return _report(kind, blend632(dev, bqcv_value(replicates, quorum)), replicates)
