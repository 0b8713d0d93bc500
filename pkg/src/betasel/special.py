"""Gamma-family special functions and reproducible random streams.

The scalar kernels (``_digamma``, ``_trigamma``) are compiled with numba so the
likelihood kernels can call them directly; the public wrappers validate their
arguments and accept scalars or arrays.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DomainError

BETA_EPS = 1e-12
_SHIFT = 10.0


@njit(cache=True, nogil=True)
def _digamma(x):
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    # Bernoulli-number asymptotic tail; remainder < 1e-17 for x >= 10
    tail = f * (-1.0 / 12 + f * (1.0 / 120 + f * (-1.0 / 252 + f * (
        1.0 / 240 + f * (-1.0 / 132 + f * (691.0 / 32760 + f * (-1.0 / 12)))))))
    return acc + math.log(x) - 0.5 / x + tail


@njit(cache=True, nogil=True)
def _trigamma(x):
    acc = 0.0
    while x < _SHIFT:
        acc += 1.0 / (x * x)
        x += 1.0
    f = 1.0 / (x * x)
    tail = 1.0 + f * (1.0 / 6 + f * (-1.0 / 30 + f * (1.0 / 42 + f * (
        -1.0 / 30 + f * (5.0 / 66 + f * (-691.0 / 2730 + f * (7.0 / 6)))))))
    return acc + 0.5 * f + tail / x


@njit(cache=True, nogil=True)
def _apply(kind, u, out):
    for i in range(u.size):
        if kind == 0:
            out[i] = math.lgamma(u[i])
        elif kind == 1:
            out[i] = _digamma(u[i])
        else:
            out[i] = _trigamma(u[i])


def _evaluate(kind, u, name):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite positive arguments")
    flat = np.ascontiguousarray(arr).ravel()
    out = np.empty_like(flat)
    _apply(kind, flat, out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def log_gamma(u):
    """Natural log of the gamma function for ``u > 0``."""
    return _evaluate(0, u, "log_gamma")


def digamma(u):
    """Digamma function, the derivative of ``log_gamma``."""
    return _evaluate(1, u, "digamma")


def trigamma(u):
    """Trigamma function, the derivative of ``digamma``. Always positive."""
    return _evaluate(2, u, "trigamma")


class RngStream:
    """Deterministic random stream addressed by ``(master_seed, stream_id)``.

    ``stream_id`` is a tuple of non-negative integers naming a node in a tree
    of independent streams; :meth:`child` descends one level. The underlying
    generator is a PCG64 seeded through :class:`numpy.random.SeedSequence`
    with the stream id as its spawn key, so the same address always yields the
    same sequence and distinct addresses are statistically independent.
    """

    def __init__(self, master_seed: int, stream_id=()):
        if isinstance(stream_id, int):
            stream_id = (stream_id,)
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = tuple(int(s) for s in stream_id)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id + tuple(ids))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def sample_beta(stream: RngStream, p, q, size=None):
    """Draw Beta(p, q) variates as G1 / (G1 + G2) from two gamma draws.

    ``p`` and ``q`` broadcast against each other (and ``size``). Draws are
    clamped to ``[1e-12, 1 - 1e-12]`` so their logs stay finite.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))) or np.any(p <= 0) or np.any(q <= 0):
        raise DomainError("beta shapes must be finite and positive")
    if size is None:
        size = np.broadcast(p, q).shape
    g1 = stream.generator.standard_gamma(p, size=size)
    g2 = stream.generator.standard_gamma(q, size=size)
    total = g1 + g2
    with np.errstate(invalid="ignore"):
        draw = g1 / total
    # both gammas can underflow to 0 for tiny shapes; fall back to the mean
    bad = ~np.isfinite(draw)
    if np.any(bad):
        draw = np.where(bad, np.broadcast_to(p / (p + q), draw.shape), draw)
    draw = np.clip(draw, BETA_EPS, 1.0 - BETA_EPS)
    if draw.ndim == 0:
        return float(draw)
    return draw
