"""Derived quantities: occupations, Wannier-Stark fidelities, photon-number
variation, condensate fraction and the stationary / oscillatory / chaotic
classifier."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import periodogram

from .dynamics import CumulantState, MeanFieldState, Trajectory
from .linalg import hermitian_eigenvalues
from .wannier_stark import WSBasis, build_basis

__all__ = [
    "ClassificationResult",
    "FidelitySpectrum",
    "UndefinedObservableError",
    "autocorrelation_period",
    "avg_max_fidelity",
    "classify",
    "condensate_fraction",
    "delta_n",
    "fidelities",
    "hermitian_eigenvalues",
    "limit_cycle_return",
    "single_particle_density_matrix",
    "site_occupations",
    "theta",
    "total_photon_number",
    "ws_fidelity",
]

log = logging.getLogger(__name__)

STATIONARY = "Stationary"
OSCILLATORY = "Oscillatory"
CHAOTIC = "Chaotic"
INCONCLUSIVE = "Inconclusive"

# bins either side of a spectral line counted as belonging to it (Hann main lobe)
_LINE_HALF_WIDTH = 2
_SUBHARMONIC_LEVEL = 1e-3


class UndefinedObservableError(ValueError):
    """The observable has no value for this input (zero norm, zero mean, ...)."""


def site_occupations(state) -> np.ndarray:
    if isinstance(state, CumulantState):
        n = np.real(np.diag(state.normal)).copy()
        if np.any(n < 0):
            if n.min() < -1e-9:
                log.warning("negative occupation %.3e clamped to 0", n.min())
            n[n < 0] = 0.0
        return n
    alpha = np.asarray(state.alpha if isinstance(state, MeanFieldState) else state)
    return alpha.real ** 2 + alpha.imag ** 2


def total_photon_number(state) -> float:
    return float(site_occupations(state).sum())


@dataclass(frozen=True, eq=False)
class FidelitySpectrum:
    values: np.ndarray
    modes: np.ndarray
    time: float | None = None

    @property
    def dominant_mode(self) -> int:
        return int(self.modes[int(np.argmax(self.values))])

    def __getitem__(self, n: int) -> float:
        return float(self.values[int(np.flatnonzero(self.modes == n)[0])])


def fidelities(alpha, basis: WSBasis) -> np.ndarray:
    """``|<Psi_n|psi>|^2`` for one amplitude vector or a stack of them (sites last)."""
    alpha = np.asarray(alpha)
    norm2 = np.sum(alpha.real ** 2 + alpha.imag ** 2, axis=-1)
    if np.any(norm2 <= 0):
        raise UndefinedObservableError("fidelity undefined for a zero-norm state")
    overlap = alpha @ basis.coefficients.T
    return (overlap.real ** 2 + overlap.imag ** 2) / np.asarray(norm2)[..., None]


def ws_fidelity(state, basis: WSBasis) -> FidelitySpectrum:
    """Overlaps of the normalised mean-field wavefunction with every basis mode."""
    alpha = state.alpha if isinstance(state, (MeanFieldState, CumulantState)) else state
    time = getattr(state, "time", None)
    return FidelitySpectrum(fidelities(alpha, basis), basis.mode_range.copy(), time)


def delta_n(series) -> float:
    """Relative peak-to-peak variation ``(max N - min N) / avg N``."""
    N = np.asarray(series, dtype=float)
    if N.size == 0:
        raise UndefinedObservableError("empty series")
    avg = N.mean()
    if avg <= 0:
        raise UndefinedObservableError("average photon number is zero")
    return float((N.max() - N.min()) / avg)


def _window(traj: Trajectory, t_start: float | None) -> Trajectory:
    if t_start is None:
        return traj
    w = traj.window(t_start)
    if w.times.size == 0:
        raise UndefinedObservableError(f"no samples after t = {t_start}")
    return w


def avg_max_fidelity(traj: Trajectory, basis: WSBasis | None = None, t_start: float | None = None) -> float:
    """Time average of ``max_n P_n(t)`` over the samples from ``t_start`` on."""
    w = _window(traj, t_start)
    basis = basis or build_basis(traj.params)
    return float(fidelities(w.alpha, basis).max(axis=1).mean())


def theta(traj: Trajectory, basis: WSBasis | None = None, t_start: float | None = None) -> float:
    """``delta_n * avg_max_fidelity``: large only for regular oscillations."""
    w = _window(traj, t_start)
    return delta_n(w.total) * avg_max_fidelity(w, basis)


def single_particle_density_matrix(state) -> np.ndarray:
    """``<a_j^+ a_l>`` with Hermiticity enforced (rank one for a mean-field state)."""
    if isinstance(state, CumulantState):
        G = np.asarray(state.normal, dtype=complex)
    else:
        alpha = np.asarray(state.alpha if isinstance(state, MeanFieldState) else state, dtype=complex)
        G = np.outer(alpha.conj(), alpha)
    return 0.5 * (G + G.conj().T)


def condensate_fraction(state) -> float:
    """Largest eigenvalue of the single-particle density matrix over its trace."""
    rho = single_particle_density_matrix(state)
    N = float(np.trace(rho).real)
    if N <= 0:
        raise UndefinedObservableError("condensate fraction undefined for an empty state")
    ev = hermitian_eigenvalues(rho)
    if ev[-1] < -1e-6 * N:
        log.warning("density matrix eigenvalue %.3e below -1e-6 N: closure breakdown", ev[-1])
    return float(ev[0] / N)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ClassificationResult:
    label: str
    delta_n: float
    avg_max_fidelity: float
    theta: float
    period: float | None = None
    peak_fraction: float | None = None
    n0_over_n: float | None = None
    diagnostics: str = ""

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["N0_over_N"] = rec.pop("n0_over_n")
        return rec


def _uniform_step(times: np.ndarray) -> float:
    if times.size < 16:
        raise UndefinedObservableError(f"need at least 16 samples, have {times.size}")
    steps = np.diff(times)
    dt = float(np.median(steps))
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise UndefinedObservableError("spectral analysis needs a uniform sample grid")
    return dt


def _line(freqs: np.ndarray, f0: float, df: float) -> np.ndarray:
    return np.abs(freqs - f0) <= (_LINE_HALF_WIDTH + 0.5) * df


def spectral_analysis(N, dt: float, *, min_periods: float = 10.0):
    """Dominant oscillation of a photon-number series.

    Only frequencies with at least ``min_periods`` cycles in the window are
    candidates for the dominant line. A weaker spectral line at a half or a
    third of it is taken as the fundamental when present.

    Returns ``(fundamental, fraction)``: the fundamental frequency (``None``
    if no frequency is resolvable) and the share of the oscillating power in
    it and its harmonics.
    """
    x = np.asarray(N, dtype=float)
    freqs, power = periodogram(x, fs=1.0 / dt, window="hann", detrend="constant")
    power = power.copy()
    power[0] = 0.0
    total = power.sum()
    if total <= 0:
        return None, 0.0
    df = freqs[1] - freqs[0]
    f_min = min_periods / (x.size * dt)
    cand = np.flatnonzero(freqs >= f_min - 1e-12)
    if cand.size == 0:
        return None, 0.0
    k = cand[np.argmax(power[cand])]
    f0 = freqs[k]
    fundamental = f0
    for m in (3, 2):
        fs = f0 / m
        if fs < f_min:
            continue
        near = np.flatnonzero(_line(freqs, fs, df))
        j = near[np.argmax(power[near])]
        is_peak = 0 < j < power.size - 1 and power[j] >= power[j - 1] and power[j] >= power[j + 1]
        if is_peak and power[j] >= _SUBHARMONIC_LEVEL * power[k]:
            fundamental = fs
            break
    mask = np.zeros(freqs.size, dtype=bool)
    for h in range(1, int(freqs[-1] / fundamental) + 1):
        mask |= _line(freqs, h * fundamental, df)
    return float(fundamental), float(power[mask].sum() / total)


def classify(
    traj: Trajectory,
    basis: WSBasis | None = None,
    *,
    t_start: float | None = None,
    stationary_threshold: float = 0.01,
    peak_fraction: float = 0.6,
    min_periods: float = 10.0,
) -> ClassificationResult:
    """Label a run Stationary, Oscillatory or Chaotic.

    Stationary when ``delta_n`` over the window is below
    ``stationary_threshold``. Otherwise Oscillatory when the dominant line of
    the Hann-windowed periodogram of ``N(t)`` and its harmonics carry more than
    ``peak_fraction`` of the oscillating power, else Chaotic. Lines are only
    resolved if they repeat ``min_periods`` times in the window; a window
    shorter than ``min_periods`` Bloch periods ``2 pi / dw`` is Inconclusive.

    ``t_start`` defaults to ``6 / kappa`` (the end of the transient).
    """
    if t_start is None:
        t_start = 6.0 / traj.params.loss if traj.params.loss > 0 else traj.times[0]
    w = _window(traj, t_start)
    basis = basis or build_basis(traj.params)
    dn = delta_n(w.total)
    fid = float(fidelities(w.alpha, basis).max(axis=1).mean()) if np.all(w.total > 0) else 0.0
    n0 = None
    if w.method == "cumulant2" and w.snapshots:
        n0 = condensate_fraction(w.snapshots[-1])
    common = dict(delta_n=dn, avg_max_fidelity=fid, theta=dn * fid, n0_over_n=n0)

    if dn < stationary_threshold:
        return ClassificationResult(STATIONARY, **common)
    dt = _uniform_step(w.times)
    span = w.times[-1] - w.times[0] + dt
    bloch = 2.0 * np.pi / traj.params.tilt
    f1, frac = spectral_analysis(w.total, dt, min_periods=min_periods)
    if f1 is None or span < min_periods * bloch:
        return ClassificationResult(
            INCONCLUSIVE, **common,
            diagnostics=f"window of {span:.4g} is shorter than {min_periods:g} Bloch periods "
                        f"({min_periods * bloch:.4g})")
    if frac > peak_fraction:
        return ClassificationResult(OSCILLATORY, period=1.0 / f1, peak_fraction=frac, **common)
    return ClassificationResult(CHAOTIC, peak_fraction=frac, **common)


# --------------------------------------------------------------------------
# periodicity diagnostics


def autocorrelation_period(times, occupations, guess: float, search: float = 0.5) -> float:
    """Lag of the autocorrelation maximum of the site-occupation pattern nearest ``guess``.

    The autocorrelation of the mean-removed occupation vectors is
    scanned over lags ``guess * (1 +- search)`` and its peak refined by a
    parabola through the three highest samples.
    """
    times = np.asarray(times, dtype=float)
    occ = np.asarray(occupations, dtype=float)
    dt = _uniform_step(times)
    x = occ - occ.mean(axis=0)
    lo = max(1, int(np.floor(guess * (1 - search) / dt)))
    hi = min(x.shape[0] - 2, int(np.ceil(guess * (1 + search) / dt)))
    if hi <= lo + 2:
        raise UndefinedObservableError("trajectory too short for the requested lag range")
    lags = np.arange(lo - 1, hi + 2)
    span = x.shape[0] - lags[-1]
    period = guess / dt
    for _ in range(3):
        # same reference samples for every lag, spanning whole periods so the peak stays symmetric;
        # the window is re-cut from the refined period until it settles
        m = int(round(np.floor(span / period) * period)) if span >= period else span
        corr = np.array([np.sum(x[:m] * x[k:k + m]) for k in lags]) / m
        i = int(np.argmax(corr[1:-1])) + 1
        y0, y1, y2 = corr[i - 1], corr[i], corr[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        period = lags[i] + shift
    return float(period * dt)


def limit_cycle_return(traj: Trajectory, period: float, t_start: float | None = None) -> float:
    """Worst-case return distance of the amplitude orbit, relative to its diameter.

    For every sample time ``t`` that still has two periods of data after it,
    the distance ``min_{t' > t + period/2} |alpha(t') - alpha(t)|`` is taken
    over the following two periods; the maximum over ``t`` is divided by the
    largest distance between any two points of the orbit.
    """
    w = _window(traj, t_start)
    a = w.alpha
    dt = _uniform_step(w.times)
    half = int(np.ceil(0.5 * period / dt))
    reach = int(np.ceil(2.0 * period / dt))
    if a.shape[0] <= reach + 1:
        raise UndefinedObservableError("window shorter than two periods")
    worst = 0.0
    for i in range(a.shape[0] - reach):
        seg = a[i + half + 1:i + reach + 1]
        d = np.sqrt(np.min(np.sum(np.abs(seg - a[i]) ** 2, axis=1)))
        worst = max(worst, float(d))
    # orbit diameter from all pairs (subsampled rows keep this O(n^2 / s^2))
    stride = max(1, a.shape[0] // 1500)
    pts = a[::stride]
    sq = np.sum(np.abs(pts) ** 2, axis=1)
    diam2 = sq[:, None] + sq[None, :] - 2 * np.real(pts @ pts.conj().T)
    diameter = float(np.sqrt(max(diam2.max(), 0.0)))
    if diameter == 0:
        raise UndefinedObservableError("orbit is a single point")
    return worst / diameter
