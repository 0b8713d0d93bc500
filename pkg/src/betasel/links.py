"""Link functions for the mean and dispersion submodels.

Each link maps (0, 1) to the real line. The inverse and the derivative
``dm/deta`` exist as numba scalar kernels (used inside the likelihood loops);
the public functions wrap them with validation and broadcasting.

Conventions: ``loglog`` is ``-log(-log(m))`` and ``cloglog`` is
``log(-log(1 - m))``. ``identity`` is only meaningful for a constant
dispersion submodel.
"""
from __future__ import annotations

import enum
import math

import numpy as np
from numba import njit
from scipy import special as sps

from .errors import DomainError

EPS = 1e-12


class LinkKind(enum.Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    LOGLOG = "loglog"
    CLOGLOG = "cloglog"
    CAUCHY = "cauchy"
    IDENTITY = "identity"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, value) -> "LinkKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise DomainError(f"unknown link {value!r}; expected one of {names}") from None


_CODES = {kind: i for i, kind in enumerate(LinkKind)}
LOGIT, PROBIT, LOGLOG, CLOGLOG, CAUCHY, IDENTITY = range(6)

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True, nogil=True)
def _linkinv_raw(code, eta):
    if code == LOGIT:
        if eta >= 0:
            return 1.0 / (1.0 + math.exp(-eta))
        e = math.exp(eta)
        return e / (1.0 + e)
    elif code == PROBIT:
        return 0.5 * math.erfc(-eta * _SQRT1_2)
    elif code == LOGLOG:
        return math.exp(-math.exp(-eta))
    elif code == CLOGLOG:
        return -math.expm1(-math.exp(eta))
    elif code == CAUCHY:
        return 0.5 + math.atan(eta) / math.pi
    return eta


@njit(cache=True, nogil=True)
def _linkinv(code, eta):
    m = _linkinv_raw(code, eta)
    if m < EPS:
        return EPS
    if m > 1.0 - EPS:
        return 1.0 - EPS
    return m


@njit(cache=True, nogil=True)
def _mu_eta(code, eta):
    """Derivative of the inverse link, i.e. ``1 / g'(m)`` at ``m = g^{-1}(eta)``."""
    if code == LOGIT:
        a = math.exp(-abs(eta))
        return a / ((1.0 + a) * (1.0 + a))
    elif code == PROBIT:
        return _INV_SQRT_2PI * math.exp(-0.5 * eta * eta)
    elif code == LOGLOG:
        return math.exp(-eta - math.exp(-eta))
    elif code == CLOGLOG:
        return math.exp(eta - math.exp(eta))
    elif code == CAUCHY:
        return 1.0 / (math.pi * (1.0 + eta * eta))
    return 1.0


@njit(cache=True, nogil=True)
def _vec_inverse(code, eta, out):
    for i in range(eta.size):
        out[i] = _linkinv(code, eta[i])


@njit(cache=True, nogil=True)
def _vec_mu_eta(code, eta, out):
    for i in range(eta.size):
        out[i] = _mu_eta(code, eta[i])


def _as_array(x):
    return np.asarray(x, dtype=float)


def _unwrap(arr, out):
    if arr.ndim == 0:
        return float(out.reshape(()))
    return out


def _check_unit(kind, m):
    if kind is LinkKind.IDENTITY:
        if not np.all(np.isfinite(m)):
            raise DomainError("identity link argument must be finite")
        return
    if not np.all((m > 0) & (m < 1)):
        raise DomainError(f"{kind.value} link is defined on (0, 1) only")


def link_eval(kind, m):
    """Evaluate ``g(m)``."""
    kind = LinkKind.parse(kind)
    m = _as_array(m)
    _check_unit(kind, m)
    if kind is LinkKind.LOGIT:
        out = np.log(m) - np.log1p(-m)
    elif kind is LinkKind.PROBIT:
        out = sps.ndtri(m)
    elif kind is LinkKind.LOGLOG:
        out = -np.log(-np.log(m))
    elif kind is LinkKind.CLOGLOG:
        out = np.log(-np.log1p(-m))
    elif kind is LinkKind.CAUCHY:
        out = np.tan(np.pi * (m - 0.5))
    else:
        out = m.copy()
    return _unwrap(m, np.asarray(out, dtype=float))


def link_inverse(kind, eta):
    """Evaluate ``g^{-1}(eta)``, saturating at ``[1e-12, 1 - 1e-12]``."""
    kind = LinkKind.parse(kind)
    eta = _as_array(eta)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor must be finite")
    flat = np.ascontiguousarray(eta).ravel()
    out = np.empty_like(flat)
    _vec_inverse(kind.code, flat, out)
    return _unwrap(eta, out.reshape(eta.shape))


def link_deriv(kind, m):
    """First derivative ``g'(m)``."""
    kind = LinkKind.parse(kind)
    m = _as_array(m)
    _check_unit(kind, m)
    eta = np.ascontiguousarray(_as_array(link_eval(kind, m))).ravel()
    out = np.empty_like(eta)
    _vec_mu_eta(kind.code, eta, out)
    return _unwrap(m, (1.0 / out).reshape(m.shape))
