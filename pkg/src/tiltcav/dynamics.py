"""Open-system dynamics of the driven, tilted Kerr-cavity lattice.

Two truncations of the moment hierarchy generated by the Heisenberg equation
``da_j/dt = i[H, a_j] - kappa a_j`` are provided:

* ``meanfield`` keeps the amplitudes ``alpha_j = <a_j>`` (first-order cumulants);
* ``cumulant2`` additionally evolves ``G_jk = <a_j^+ a_k>`` and
  ``A_jk = <a_j a_k>``, closing third- and fourth-order moments by setting
  all joint cumulants of order >= 3 to zero.

Site vectors are indexed by position ``0..L-1`` (label ``j = index - (L-1)/2``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .integrator import IntegrationError, IntegratorStats, dopri5
from .model import LatticeParams, RunSettings, check, detunings

__all__ = [
    "CumulantState",
    "IntegrationError",
    "MeanFieldState",
    "SteadyState",
    "Trajectory",
    "close_moment",
    "cumulant_rhs",
    "detect_steady_state",
    "initial_state",
    "integrate",
    "mean_field_rhs",
    "simulate",
]

log = logging.getLogger(__name__)

EDGE_SITES = 3
EDGE_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    alpha: np.ndarray
    time: float = 0.0

    @classmethod
    def vacuum(cls, sites: int) -> "MeanFieldState":
        return cls(np.zeros(sites, dtype=complex))


@dataclass(frozen=True, eq=False)
class CumulantState:
    """First and second moments; ``normal[j, k] = <a_j^+ a_k>``, ``anomalous[j, k] = <a_j a_k>``."""

    alpha: np.ndarray
    normal: np.ndarray
    anomalous: np.ndarray
    time: float = 0.0

    @classmethod
    def vacuum(cls, sites: int) -> "CumulantState":
        z = np.zeros((sites, sites), dtype=complex)
        return cls(np.zeros(sites, dtype=complex), z, z.copy())

    @classmethod
    def coherent(cls, alpha, time: float = 0.0) -> "CumulantState":
        """Product coherent state: every cumulant beyond the first vanishes."""
        alpha = np.asarray(alpha, dtype=complex)
        return cls(alpha.copy(), np.outer(alpha.conj(), alpha), np.outer(alpha, alpha), time)


# --------------------------------------------------------------------------
# right-hand sides


def _neighbours(x: np.ndarray) -> np.ndarray:
    """``x[j+1] + x[j-1]`` along the first axis with open boundaries."""
    out = np.zeros_like(x)
    out[:-1] += x[1:]
    out[1:] += x[:-1]
    return out


def _mean_field_system(params: LatticeParams):
    delta = detunings(params)
    eta = params.eta()
    J, chi, kappa = params.hopping, params.kerr, params.loss

    def f(_t: float, a: np.ndarray) -> np.ndarray:
        hop = np.zeros_like(a)
        hop[:-1] += a[1:]
        hop[1:] += a[:-1]
        return -1j * (delta * a - J * hop + 2.0 * chi * (a.real ** 2 + a.imag ** 2) * a + eta) - kappa * a

    return f


def mean_field_rhs(state: MeanFieldState, params: LatticeParams) -> np.ndarray:
    """``d alpha_j/dt = -i[D_j a_j - J(a_{j+1} + a_{j-1}) + 2 chi |a_j|^2 a_j + eta_j] - kappa a_j``."""
    return _mean_field_system(params)(state.time, np.asarray(state.alpha, dtype=complex))


def _second_order_derivatives(params, delta, eta, alpha, G, A):
    J, chi, kappa = params.hopping, params.kerr, params.loss
    ac = alpha.conj()
    gd = np.diag(G)
    ad = np.diag(A)
    dens = ac * alpha

    def h_left(M):  # (h M)_jk
        return delta[:, None] * M - J * _neighbours(M)

    def h_right(M):  # (M h)_jk
        return M * delta[None, :] - J * _neighbours(M.T).T

    # <a_k^+ a_k a_k>
    m3 = 2.0 * gd * alpha + ad * ac - 2.0 * dens * alpha
    d_alpha = -1j * (delta * alpha - J * _neighbours(alpha) + eta + 2.0 * chi * m3) - kappa * alpha

    # <a_j^+ a_j^+ a_j a_k> and <a_j^+ a_k^+ a_k a_k>
    f1 = ad.conj()[:, None] * A + 2.0 * gd[:, None] * G - 2.0 * (dens * ac)[:, None] * alpha[None, :]
    f2 = A.conj() * ad[None, :] + 2.0 * G * gd[None, :] - 2.0 * ac[:, None] * (ac * alpha * alpha)[None, :]
    d_G = (1j * (h_left(G) - h_right(G))
           + 1j * eta[:, None] * alpha[None, :] - 1j * ac[:, None] * eta[None, :]
           + 2j * chi * (f1 - f2) - 2.0 * kappa * G)

    # <a_j^+ a_j a_j a_k>
    f3 = 2.0 * gd[:, None] * A + G * ad[:, None] - 2.0 * (ac * alpha * alpha)[:, None] * alpha[None, :]
    d_A = (-1j * (h_left(A) + h_right(A))
           - 1j * (eta[:, None] * alpha[None, :] + alpha[:, None] * eta[None, :])
           - 2j * chi * (f3 + f3.T + np.diag(ad)) - 2.0 * kappa * A)
    return d_alpha, d_G, d_A


def cumulant_rhs(state: CumulantState, params: LatticeParams):
    """Time derivatives ``(d alpha, d G, d A)`` of the second-order cumulant equations."""
    return _second_order_derivatives(
        params, detunings(params), params.eta(),
        np.asarray(state.alpha, dtype=complex),
        np.asarray(state.normal, dtype=complex),
        np.asarray(state.anomalous, dtype=complex),
    )


class _TrianglePacking:
    """Flat storage of ``alpha`` and the upper triangles (``j <= k``) of G and A."""

    def __init__(self, sites: int):
        self.L = sites
        self.iu = np.triu_indices(sites)
        self.m = self.iu[0].size

    def pack(self, alpha, G, A) -> np.ndarray:
        return np.concatenate([alpha, G[self.iu], A[self.iu]])

    def unpack(self, y: np.ndarray):
        L, m, iu = self.L, self.m, self.iu
        alpha = y[:L]
        G = np.zeros((L, L), dtype=complex)
        G[iu] = y[L:L + m]
        G = G + np.triu(G, 1).conj().T
        A = np.zeros((L, L), dtype=complex)
        A[iu] = y[L + m:]
        A = A + np.triu(A, 1).T
        return alpha, G, A


def _cumulant_system(params: LatticeParams, packing: _TrianglePacking):
    delta = detunings(params)
    eta = params.eta().astype(complex)

    def f(_t: float, y: np.ndarray) -> np.ndarray:
        alpha, G, A = packing.unpack(y)
        return packing.pack(*_second_order_derivatives(params, delta, eta, alpha, G, A))

    return f


# --------------------------------------------------------------------------
# moment closure


def _first(op, state):
    i, dag = op
    return np.conj(state.alpha[i]) if dag else state.alpha[i]


def _second(op1, op2, state):
    (i, d1), (k, d2) = op1, op2
    if d1 and d2:
        return np.conj(state.anomalous[i, k])
    if d1:
        return state.normal[i, k]
    if d2:
        return state.normal[k, i] + (1.0 if i == k else 0.0)
    return state.anomalous[i, k]


def close_moment(ops: Sequence[tuple[int, bool]], state: CumulantState) -> complex:
    """Expectation of a normal-ordered operator product under the closure.

    ``ops`` lists ``(site_index, is_creation)`` pairs, creation operators
    first. Products of one or two operators are read off the state; three and
    four operator products are rebuilt with all cumulants of order >= 3 set
    to zero::

        <ABC>  = <AB><C> + <AC><B> + <BC><A> - 2<A><B><C>
        <ABCD> = <AB><CD> + <AC><BD> + <AD><BC> - 2<A><B><C><D>
    """
    ops = [(int(i), bool(d)) for i, d in ops]
    if not 1 <= len(ops) <= 4:
        raise ValueError(f"unsupported moment order {len(ops)}")
    flags = [d for _, d in ops]
    if flags != sorted(flags, reverse=True):
        raise ValueError("operator product must be normal ordered (creators first)")
    if len(ops) == 1:
        return complex(_first(ops[0], state))
    if len(ops) == 2:
        return complex(_second(ops[0], ops[1], state))
    m = [_first(op, state) for op in ops]
    if len(ops) == 3:
        a, b, c = ops
        return complex(_second(a, b, state) * m[2] + _second(a, c, state) * m[1]
                       + _second(b, c, state) * m[0] - 2.0 * m[0] * m[1] * m[2])
    a, b, c, d = ops
    return complex(_second(a, b, state) * _second(c, d, state)
                   + _second(a, c, state) * _second(b, d, state)
                   + _second(a, d, state) * _second(b, c, state)
                   - 2.0 * m[0] * m[1] * m[2] * m[3])


# --------------------------------------------------------------------------
# integration


@dataclass(eq=False)
class Trajectory:
    """Sampled run of one simulation.

    ``occupations`` and ``alpha`` have one row per entry of ``times``.
    ``snapshots`` holds full states every ``snapshot_stride`` samples and
    always the final state.
    """

    params: LatticeParams
    method: str
    times: np.ndarray
    total: np.ndarray
    occupations: np.ndarray
    alpha: np.ndarray
    snapshots: list = field(default_factory=list)
    stats: IntegratorStats = field(default_factory=IntegratorStats)
    edge_fraction: float = 0.0
    clamped: int = 0

    @property
    def final_state(self):
        return self.snapshots[-1]

    @property
    def boundary_contaminated(self) -> bool:
        return self.edge_fraction > EDGE_FRACTION

    def window(self, t_start: float) -> "Trajectory":
        """Samples with ``time >= t_start``; snapshots are kept only if they fall inside."""
        keep = self.times >= t_start - 1e-9
        snaps = [s for s in self.snapshots if s.time >= t_start - 1e-9]
        return Trajectory(self.params, self.method, self.times[keep], self.total[keep],
                          self.occupations[keep], self.alpha[keep], snaps, self.stats,
                          self.edge_fraction, self.clamped)


def _edge_fraction(occupations: np.ndarray) -> float:
    total = occupations.sum(axis=1)
    edge = occupations[:, :EDGE_SITES].sum(axis=1) + occupations[:, -EDGE_SITES:].sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total > 0, edge / np.where(total > 0, total, 1.0), 0.0)
    return float(frac.max()) if frac.size else 0.0


def initial_state(params: LatticeParams, method: str = "meanfield",
                  seed_amplitude: float = 0.0, seed: int = 0):
    """Vacuum, or a weak random coherent seed of size ``seed_amplitude``."""
    L = params.sites
    alpha = np.zeros(L, dtype=complex)
    if seed_amplitude > 0:
        rng = np.random.default_rng(seed)
        alpha = seed_amplitude * (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2.0)
    if method == "meanfield":
        return MeanFieldState(alpha)
    if method == "cumulant2":
        return CumulantState.coherent(alpha)
    raise ValueError(f"unknown method {method!r}")


def integrate(
    initial,
    params: LatticeParams,
    t_end: float,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    sample_dt: float = 0.5,
    snapshot_stride: int = 0,
    t_eval=None,
) -> Trajectory:
    """Evolve ``initial`` (a :class:`MeanFieldState` or :class:`CumulantState`) for ``t_end``.

    Samples are taken every ``sample_dt`` from the initial time (or at the
    offsets ``t_eval``) by dense output, and always at the end of the run.
    Raises :class:`IntegrationError` on step-size underflow or a non-finite
    state.
    """
    if not isinstance(initial, (MeanFieldState, CumulantState)):
        raise TypeError(f"unsupported state type {type(initial).__name__}")
    check(params)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if t_eval is None:
        n = int(np.floor(t_end / sample_dt + 1e-9))
        t_eval = sample_dt * np.arange(n + 1)
    rel = np.asarray(t_eval, dtype=float)
    if rel.size == 0 or rel[-1] < t_end - 1e-9:
        rel = np.append(rel, t_end)
    t0 = float(initial.time)
    L = params.sites
    snaps: list = []
    last: list = [None]
    counter = [0]

    if isinstance(initial, CumulantState):
        method = "cumulant2"
        packing = _TrianglePacking(L)
        f = _cumulant_system(params, packing)
        y0 = packing.pack(np.asarray(initial.alpha, complex), np.asarray(initial.normal, complex),
                          np.asarray(initial.anomalous, complex))
        diag_at = L + np.concatenate([[0], np.cumsum(np.arange(L, 1, -1))])

        def to_state(y, t):
            a, G, A = packing.unpack(y)
            return CumulantState(a.copy(), G, A, t)

        def record(t, y):
            return y[:L].copy(), y[diag_at].real.copy()
    else:
        method = "meanfield"
        f = _mean_field_system(params)
        y0 = np.asarray(initial.alpha, dtype=complex).copy()

        def to_state(y, t):
            return MeanFieldState(y.copy(), t)

        def record(t, y):
            return y.copy(), None

    def sample(t, y):
        i = counter[0]
        counter[0] += 1
        if snapshot_stride and i % snapshot_stride == 0:
            snaps.append(to_state(y, t0 + t))
        last[0] = y.copy()
        return record(t, y)

    samples, stats = dopri5(f, y0, t_end, rel, rtol=rtol, atol=atol, sample=sample)
    times = t0 + rel
    alpha = np.array([s[0] for s in samples])
    if not np.all(np.isfinite(alpha)):
        bad = int(np.argmax(~np.all(np.isfinite(alpha), axis=1)))
        raise IntegrationError("non-finite state", float(times[bad]), float("nan"))
    clamped = 0
    if method == "meanfield":
        occ = alpha.real ** 2 + alpha.imag ** 2
    else:
        occ = np.array([s[1] for s in samples])
        neg = occ < 0
        clamped = int(neg.sum())
        if occ.min() < -1e-9:
            log.warning("cumulant occupations down to %.3e clamped to 0", occ.min())
        occ = np.where(neg, 0.0, occ)

    end = to_state(last[0], t0 + t_end)
    if snaps and abs(snaps[-1].time - end.time) < 1e-12:
        snaps[-1] = end
    else:
        snaps.append(end)
    return Trajectory(params, method, times, occ.sum(axis=1), occ, alpha,
                      snaps, stats, _edge_fraction(occ), clamped)


def simulate(params: LatticeParams, settings: RunSettings | None = None) -> Trajectory:
    """Run the configured method from the configured initial state."""
    settings = (settings or RunSettings()).resolved(params)
    state = initial_state(params, settings.method, settings.seed_amplitude, settings.seed)
    return integrate(state, params, settings.t_end, rtol=settings.rtol, atol=settings.atol,
                     sample_dt=settings.sample_dt, snapshot_stride=settings.snapshot_stride)


# --------------------------------------------------------------------------
# steady state


@dataclass(frozen=True)
class SteadyState:
    reached: bool
    time: float | None = None


def detect_steady_state(traj: Trajectory, *, eps: float = 1e-3, window: float | None = None,
                        t_from: float | None = None) -> SteadyState:
    """Earliest time from which the run stays flat.

    A start time ``t*`` qualifies when, over ``[t*, t_end]`` (at least
    ``window`` long, default two Bloch periods ``4 pi / dw``), both the total
    photon number and every site occupation vary by no more than
    ``eps * avg N``.
    """
    if window is None:
        window = 2.0 * 2.0 * np.pi / traj.params.tilt
    times = traj.times
    t_from = times[0] if t_from is None else t_from
    sel = times >= t_from - 1e-12
    times = times[sel]
    if times.size < 2 or times[-1] - times[0] < window - 1e-9:
        raise ValueError(f"window too short: need {window:.4g}, have {times[-1] - times[0] if times.size else 0:.4g}")
    N = traj.total[sel]
    occ = traj.occupations[sel]

    def suffix(x, op):
        return op.accumulate(x[::-1], axis=0)[::-1]

    spread_N = suffix(N, np.maximum) - suffix(N, np.minimum)
    spread_sites = (suffix(occ, np.maximum) - suffix(occ, np.minimum)).max(axis=1)
    mean_N = np.cumsum(N[::-1])[::-1] / np.arange(N.size, 0, -1)
    ok = (spread_N <= eps * mean_N) & (spread_sites <= eps * mean_N) & (times[-1] - times >= window - 1e-9)
    if not ok.any():
        return SteadyState(False)
    return SteadyState(True, float(times[int(np.argmax(ok))]))
