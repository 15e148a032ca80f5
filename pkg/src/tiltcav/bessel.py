"""Bessel functions of the first kind of integer order.

Small and moderate arguments use Miller's backward recurrence normalised with
``J_0(x) + 2 sum_k J_2k(x) = 1``; a single downward sweep yields every order
``0..n`` at once, which is what the Wannier-Stark coefficient matrices need.
Large arguments with low order switch to Hankel's asymptotic expansion.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["MAX_ORDER", "MAX_ARG", "bessel_j", "bessel_j_sequence"]

MAX_ORDER = 200
MAX_ARG = 500.0

_BIG = 1e250
_ASYMPTOTIC_MIN_ARG = 25.0
# below this the leading power-series term is exact to double precision and
# the recurrence factor 2/x would overflow
_TINY_ARG = 1e-20


def _start_order(nmax: int, xmax: float) -> int:
    top = max(nmax, int(math.ceil(xmax)))
    m = top + 20 + int(6.0 * math.sqrt(top + 1.0))
    return m + (m % 2)


def _miller(ax: np.ndarray, nmax: int) -> np.ndarray:
    """Orders 0..nmax for strictly positive arguments ``ax`` (1-D)."""
    m = _start_order(nmax, float(ax.max()))
    vals = np.zeros((m + 2, ax.size))
    vals[m] = 1e-30
    inv = 2.0 / ax
    for k in range(m, 0, -1):
        vals[k - 1] = k * inv * vals[k] - vals[k + 1]
        big = np.abs(vals[k - 1]) > _BIG
        if big.any():
            vals[k - 1:, big] /= _BIG
    norm = vals[0] + 2.0 * vals[2:m + 1:2].sum(axis=0)
    return vals[: nmax + 1] / norm


def _hankel(n: int, x: float) -> float:
    """Asymptotic expansion for ``x >> n**2``; truncated at its smallest term."""
    mu = 4.0 * n * n
    p, q = 1.0, 0.0
    term = 1.0
    last = math.inf
    k = 1
    while k < 200:
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        size = abs(term)
        if size >= last or size < 1e-17:
            break
        last = size
        sign = (-1) ** (k // 2)
        if k % 2:
            q += sign * term
        else:
            p += sign * term
        k += 1
    phase = x - (0.5 * n + 0.25) * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(phase) - q * math.sin(phase))


def bessel_j_sequence(x, nmax: int) -> np.ndarray:
    """``J_0(x) .. J_nmax(x)`` for scalar or array ``x``.

    Returns an array of shape ``(nmax + 1,) + np.shape(x)``.
    """
    if nmax < 0:
        raise ValueError("nmax must be non-negative")
    xa = np.asarray(x, dtype=float)
    flat = xa.ravel()
    out = np.zeros((nmax + 1, flat.size))
    zero = flat == 0.0
    out[0, zero] = 1.0
    tiny = ~zero & (np.abs(flat) < _TINY_ARG)
    if tiny.any():
        half = np.abs(flat[tiny]) / 2.0
        term = np.ones_like(half)
        for n in range(nmax + 1):
            out[n, tiny] = term
            term = term * half / (n + 1)
    live = ~zero & ~tiny
    if live.any():
        ax = np.abs(flat[live])
        vals = _miller(ax, nmax)
        out[:, live] = vals
    odd = np.arange(nmax + 1) % 2 == 1
    out[np.ix_(odd, flat < 0)] *= -1.0
    return out.reshape((nmax + 1,) + xa.shape)


def _bessel_scalar(n: int, x: float) -> float:
    sign = 1.0
    if n < 0:
        n = -n
        sign = -1.0 if n % 2 else 1.0
    if x < 0:
        x = -x
        if n % 2:
            sign = -sign
    if x >= _ASYMPTOTIC_MIN_ARG and x > 1.5 * n * n:
        return sign * _hankel(n, x)
    return sign * float(bessel_j_sequence(x, n)[n])


def bessel_j(order: int, x):
    """Bessel function of the first kind ``J_order(x)``.

    Valid for ``|order| <= 200`` and ``|x| <= 500``; ``x`` may be an array.

    >>> bessel_j(0, 0.0)
    1.0
    """
    if int(order) != order:
        raise ValueError(f"order must be an integer, got {order!r}")
    order = int(order)
    if abs(order) > MAX_ORDER:
        raise ValueError(f"|order| must be <= {MAX_ORDER}, got {order}")
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)) or np.any(np.abs(xa) > MAX_ARG):
        raise ValueError(f"|x| must be finite and <= {MAX_ARG}")
    if xa.ndim == 0:
        return _bessel_scalar(order, float(xa))
    return np.array([_bessel_scalar(order, float(v)) for v in xa.ravel()]).reshape(xa.shape)
