"""Wannier-Stark basis of the tilted lattice and exact non-interacting dynamics.

The single-particle eigenstates of a tilted tight-binding chain are
``b_n = sum_j beta[n, j] a_j`` with ``beta[n, j] = J_{j-n}(2J/dw)``; mode ``n``
has energy ``dw * (n - j0)`` in the pump frame.  On a finite lattice these are
exact up to the Bessel tails that leak past the edges; modes whose tails do
are flagged as boundary contaminated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bessel import bessel_j_sequence
from .model import LatticeParams, check, site_indices

__all__ = [
    "ResonanceError",
    "WSBasis",
    "analytic_mode_evolution",
    "build_basis",
    "find_anti_resonances",
    "from_ws",
    "pump_projection",
    "steady_state_occupation",
    "steady_state_profile",
    "support_margin",
    "to_ws",
]

TAIL_TOLERANCE = 1e-10


class ResonanceError(ArithmeticError):
    """Undamped resonant drive: the stationary occupation diverges."""


@dataclass(frozen=True, eq=False)
class WSBasis:
    """Truncated Wannier-Stark coefficient matrix.

    Attributes
    ----------
    gamma : float
        ``2J/dw``.
    coefficients : ndarray, shape (n_modes, L)
        ``beta[n, j]``; rows follow ``mode_range``, columns follow ``sites``.
    mode_range : ndarray of int
        Wannier-Stark indices ``n`` kept.
    sites : ndarray of int
        Lattice site labels.
    contaminated : ndarray of bool
        True where the mode's support overflows the lattice; such rows are
        usable but not guaranteed orthonormal.
    """

    gamma: float
    coefficients: np.ndarray
    mode_range: np.ndarray
    sites: np.ndarray
    contaminated: np.ndarray

    def row(self, n: int) -> np.ndarray:
        return self.coefficients[self.index(n)]

    def index(self, n: int) -> int:
        hits = np.flatnonzero(self.mode_range == n)
        if hits.size == 0:
            raise KeyError(f"mode {n} not in basis")
        return int(hits[0])

    @property
    def interior(self) -> np.ndarray:
        return self.mode_range[~self.contaminated]


def support_margin(gamma: float) -> int:
    """Half-width of a Wannier-Stark state: at least ``|gamma| + 8`` sites,
    widened until the squared Bessel tail beyond it is below 1e-10."""
    g = abs(gamma)
    base = int(math.ceil(g)) + 8
    orders = base + 40 + int(g)
    tail = bessel_j_sequence(g, orders) ** 2
    # mass outside |k| <= m for every m, both signs of k
    outside = 2.0 * (tail[::-1].cumsum()[::-1])
    m = base
    while m + 1 < outside.size and outside[m + 1] > TAIL_TOLERANCE:
        m += 1
    return m


def build_basis(params: LatticeParams, mode_range=None) -> WSBasis:
    """Wannier-Stark coefficients ``J_{j-n}(2J/dw)`` over the lattice.

    ``mode_range`` defaults to every site label. Modes closer to an edge
    than :func:`support_margin` are flagged in ``contaminated``.
    """
    if not params.tilt > 0:
        raise ValueError("tilt must be positive")
    sites = site_indices(params.sites)
    modes = sites.copy() if mode_range is None else np.asarray(list(mode_range), dtype=int)
    gamma = params.gamma
    offsets = sites[None, :] - modes[:, None]
    kmax = int(np.abs(offsets).max())
    seq = bessel_j_sequence(abs(gamma), kmax)
    k = np.abs(offsets)
    beta = seq[k]
    # J_{-k}(x) = (-1)^k J_k(x); J_k(-x) = (-1)^k J_k(x)
    flip = (offsets < 0) ^ (gamma < 0)
    beta = np.where(flip & (k % 2 == 1), -beta, beta)
    margin = support_margin(gamma)
    contaminated = (modes - margin < sites[0]) | (modes + margin > sites[-1])
    return WSBasis(float(gamma), beta, modes, sites, contaminated)


def _check_length(vec: np.ndarray, n: int, what: str) -> np.ndarray:
    vec = np.asarray(vec)
    if vec.shape[-1] != n:
        raise ValueError(f"{what} has length {vec.shape[-1]}, expected {n}")
    return vec


def to_ws(basis: WSBasis, site_amplitudes) -> np.ndarray:
    """Mode amplitudes ``b_n = sum_j beta[n, j] alpha_j``.

    Accepts a single vector or a stack with sites on the last axis.
    """
    alpha = _check_length(site_amplitudes, basis.sites.size, "site vector")
    return alpha @ basis.coefficients.T


def from_ws(basis: WSBasis, ws_amplitudes) -> np.ndarray:
    """Site amplitudes ``alpha_j = sum_n beta[n, j] b_n``."""
    b = _check_length(ws_amplitudes, basis.mode_range.size, "mode vector")
    return b @ basis.coefficients


def pump_projection(params: LatticeParams, basis: WSBasis | None = None) -> np.ndarray:
    """Effective mode drives ``eta~_n = sum_j beta[n, j] eta_j``."""
    basis = basis or build_basis(params)
    return basis.coefficients @ params.eta()


def analytic_mode_evolution(params: LatticeParams, n: int, b0: complex, t):
    """Exact amplitude of Wannier-Stark mode ``n`` at time(s) ``t`` for chi = 0.

    ``b(t) = e^{-i t z} b0 + (e^{-i t z} - 1)/z * eta~_n`` with
    ``z = dw (n - j0) - i kappa``; at ``z = 0`` the drive term is ``-i t eta~_n``.
    """
    check(params)
    basis = build_basis(params, [n])
    eta_n = float(pump_projection(params, basis)[0])
    z = params.tilt * (n - params.pump_center) - 1j * params.loss
    t = np.asarray(t, dtype=float)
    phase = np.exp(-1j * t * z)
    if z == 0:
        drive = -1j * t * eta_n
    else:
        drive = np.expm1(-1j * t * z) / z * eta_n
    out = phase * b0 + drive
    return complex(out) if out.ndim == 0 else out


def steady_state_occupation(params: LatticeParams, n: int) -> float:
    """Long-time occupation ``eta~_n^2 / (dw^2 (n - j0)^2 + kappa^2)`` of mode ``n``."""
    check(params)
    eta_n = float(pump_projection(params, build_basis(params, [n]))[0])
    denom = (params.tilt * (n - params.pump_center)) ** 2 + params.loss ** 2
    if denom == 0.0:
        raise ResonanceError(f"mode {n} is resonantly driven with zero loss")
    return eta_n * eta_n / denom


def steady_state_profile(params: LatticeParams, basis: WSBasis | None = None) -> np.ndarray:
    """Vector of :func:`steady_state_occupation` over ``basis.mode_range``."""
    check(params)
    basis = basis or build_basis(params)
    eta = pump_projection(params, basis)
    denom = (params.tilt * (basis.mode_range - params.pump_center)) ** 2 + params.loss ** 2
    if np.any(denom == 0.0):
        raise ResonanceError("a mode is resonantly driven with zero loss")
    return eta ** 2 / denom


def find_anti_resonances(lo: float, hi: float, order: int, hopping: float = 1.0,
                         steps: int = 1000, xtol: float = 1e-12) -> list[float]:
    """Tilts ``dw`` in ``[lo, hi]`` where ``J_order(2*hopping/dw)`` vanishes.

    For a single pump at site 0 the drive of mode ``n`` is ``J_{-n}(gamma)``, so
    these are the tilts at which mode ``|n| = order`` is not driven at all.
    The range is scanned on ``steps`` equal intervals for sign changes, each of
    which is then bisected down to ``xtol``.
    """
    if not (lo > 0 and hi > lo and math.isfinite(hi)):
        raise ValueError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    k = abs(int(order))

    def f(dw):
        return bessel_j_sequence(2.0 * hopping / np.asarray(dw, dtype=float), k)[k]

    grid = np.linspace(lo, hi, steps + 1)
    vals = f(grid)
    roots: list[float] = []
    for i in range(steps):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb > 0 or fb == 0.0:
            continue
        while b - a > xtol:
            mid = 0.5 * (a + b)
            fm = float(f(mid))
            if fm == 0.0:
                a = b = mid
                break
            if fa * fm < 0:
                b = mid
            else:
                a, fa = mid, fm
        roots.append(float(0.5 * (a + b)))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots
