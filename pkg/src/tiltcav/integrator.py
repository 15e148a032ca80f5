"""Adaptive Dormand-Prince 5(4) integrator for complex-valued ODE systems.

PI step-size control (Gustafsson) and the fourth-order continuous extension
of the Dormand-Prince pair give dense samples on an arbitrary output grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["IntegrationError", "IntegratorStats", "dopri5"]

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.zeros(0),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth minus embedded fourth order weights, seven stages (FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output: y(t + s h) = y + h * sum_k K_k * (P[k] . [s, s^2, s^3, s^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Integration could not proceed (step-size underflow or non-finite state)."""

    def __init__(self, message: str, t: float, max_abs: float):
        super().__init__(f"{message} at t={t:.6g} (max |y| = {max_abs:.3e})")
        self.t = t
        self.max_abs = max_abs


@dataclass
class IntegratorStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def _norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, t_end) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end - t0)


def dopri5(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_end: float,
    t_eval,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    sample: Callable[[float, np.ndarray], object] | None = None,
    max_steps: int = 10_000_000,
    first_step: float | None = None,
) -> tuple[list, IntegratorStats]:
    """Integrate ``y' = f(t, y)`` from ``t = 0`` to ``t_end``.

    Parameters
    ----------
    f : callable
        Right-hand side; ``y`` may be real or complex.
    y0 : ndarray
        One-dimensional initial state at ``t = 0``.
    t_end : float
        Final time (> 0).
    t_eval : array_like
        Increasing output times within ``[0, t_end]``.
    sample : callable, optional
        ``sample(t, y)`` is stored for every output time instead of a copy of
        ``y``; use it to keep only derived quantities of large states.

    Returns
    -------
    samples : list
        One entry per output time.
    stats : IntegratorStats
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > t_end * (1 + 1e-12)):
        raise ValueError("t_eval must be strictly increasing within [0, t_end]")
    sample = sample or (lambda _t, y: y.copy())

    y = np.array(y0, copy=True)
    if y.ndim != 1:
        raise ValueError("state must be one-dimensional")
    t = 0.0
    stats = IntegratorStats()
    out: list = []
    k_eval = 0
    while k_eval < t_eval.size and t_eval[k_eval] <= 0.0:
        out.append(sample(float(t_eval[k_eval]), y))
        k_eval += 1

    K = np.empty((7,) + y.shape, dtype=np.result_type(y, 1j) if np.iscomplexobj(y) else float)
    K[0] = f(t, y)
    stats.evaluations += 1
    h = first_step or _initial_step(f, t, y, K[0], rtol, atol, t_end)
    stats.evaluations += 1
    err_old = 1e-4
    rejected_last = False

    while t < t_end:
        if stats.accepted + stats.rejected >= max_steps:
            raise IntegrationError("step budget exhausted", t, float(np.max(np.abs(y))))
        min_step = 1e-13 * max(1.0, abs(t))
        if h < min_step:
            raise IntegrationError("step size underflow", t, float(np.max(np.abs(y))))
        last = h >= t_end - t
        if last:
            h = t_end - t

        for s in range(1, 6):
            K[s] = f(t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        K[6] = f(t + h, y_new)
        stats.evaluations += 6
        err_vec = h * (_E @ K)
        err = _norm(err_vec, y, y_new, rtol, atol)

        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            stats.rejected += 1
            rejected_last = True
            h *= _MIN_FACTOR
            continue

        if err <= 1.0:
            t_new = t_end if last else t + h
            if k_eval < t_eval.size and t_eval[k_eval] <= t_new:
                Q = _P.T @ K
                while k_eval < t_eval.size and t_eval[k_eval] <= t_new:
                    s_frac = (t_eval[k_eval] - t) / h
                    powers = np.cumprod(np.full(4, s_frac))
                    y_s = y + h * (powers @ Q)
                    out.append(sample(float(t_eval[k_eval]), y_s))
                    k_eval += 1
            t = t_new
            y = y_new
            K[0] = K[6]
            stats.accepted += 1
            err = max(err, 1e-10)
            factor = _SAFETY * err ** (-_ALPHA) * err_old ** _BETA
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if rejected_last:
                factor = min(1.0, factor)
            err_old = max(err, 1e-4)
            rejected_last = False
            h *= factor
        else:
            stats.rejected += 1
            rejected_last = True
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-_ALPHA))

    while k_eval < t_eval.size:
        out.append(sample(float(t_eval[k_eval]), y))
        k_eval += 1
    return out, stats
