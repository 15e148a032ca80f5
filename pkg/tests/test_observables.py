import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltcav.dynamics import CumulantState, MeanFieldState, Trajectory, integrate
from tiltcav.model import LatticeParams, PumpProfile
from tiltcav.observables import (CHAOTIC, INCONCLUSIVE, OSCILLATORY, STATIONARY, UndefinedObservableError,
                                 autocorrelation_period, avg_max_fidelity, classify, condensate_fraction,
                                 delta_n, fidelities, limit_cycle_return, single_particle_density_matrix,
                                 site_occupations, spectral_analysis, theta, total_photon_number, ws_fidelity)
from tiltcav.wannier_stark import build_basis

P = LatticeParams(sites=41, tilt=0.5, loss=0.01)
BASIS = build_basis(P)

complex_vectors = st.integers(0, 2**32 - 1).map(
    lambda s: (lambda r: r.standard_normal(41) + 1j * r.standard_normal(41))(np.random.default_rng(s)))


def synthetic(total, alpha=None, dt=0.5, params=P, method="meanfield", snapshots=()):
    total = np.asarray(total, dtype=float)
    times = dt * np.arange(total.size)
    if alpha is None:
        alpha = np.outer(np.sqrt(np.abs(total)), BASIS.row(0)).astype(complex)
    occ = np.abs(alpha) ** 2
    return Trajectory(params, method, times, total, occ, alpha, list(snapshots))


# --------------------------------------------------------------------------
# fidelities and scalar observables


def test_fidelity_of_a_pure_mode():
    spec = ws_fidelity(MeanFieldState(3.0 * BASIS.row(2)), BASIS)
    assert spec.dominant_mode == 2
    assert spec[2] == pytest.approx(1.0, abs=1e-12)
    assert spec[1] == pytest.approx(0.0, abs=1e-12)


def test_fidelities_sum_to_one_for_interior_states():
    alpha = BASIS.row(0) + 0.5j * BASIS.row(1)
    assert fidelities(alpha, BASIS).sum() == pytest.approx(1.0, abs=1e-9)


@given(complex_vectors, st.floats(0, 2 * np.pi), st.floats(1e-3, 1e3))
def test_fidelity_invariant_under_phase_and_scale(alpha, phase, scale):
    base = fidelities(alpha, BASIS)
    np.testing.assert_allclose(fidelities(scale * np.exp(1j * phase) * alpha, BASIS), base, atol=1e-12)


def test_fidelity_of_zero_state_is_undefined():
    with pytest.raises(UndefinedObservableError):
        fidelities(np.zeros(41), BASIS)


def test_fidelity_stack():
    stack = np.array([BASIS.row(0), BASIS.row(-1)])
    f = fidelities(stack, BASIS)
    assert f.shape == (2, 41)
    assert f[0, BASIS.index(0)] == pytest.approx(1.0) and f[1, BASIS.index(-1)] == pytest.approx(1.0)


def test_delta_n_examples():
    assert delta_n([1.0, 1.0, 1.0]) == 0.0
    assert delta_n([1.0, 3.0]) == pytest.approx(1.0)
    with pytest.raises(UndefinedObservableError):
        delta_n([0.0, 0.0])
    with pytest.raises(UndefinedObservableError):
        delta_n([])


@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=50), st.floats(1e-3, 1e3))
def test_delta_n_scale_invariant(series, c):
    assert delta_n(np.array(series) * c) == pytest.approx(delta_n(series), rel=1e-9, abs=1e-12)


def test_theta_is_product():
    t = np.arange(400) * 0.5
    traj = synthetic(10 + np.sin(0.3 * t))
    assert theta(traj) == pytest.approx(delta_n(traj.total) * avg_max_fidelity(traj, BASIS))
    assert avg_max_fidelity(traj, BASIS) == pytest.approx(1.0)


def test_site_occupations_and_total():
    alpha = np.array([1.0, 1j, 0.0])
    assert total_photon_number(MeanFieldState(alpha)) == pytest.approx(2.0)
    G = np.diag([1.0, -1e-12, 2.0]).astype(complex)
    state = CumulantState(np.zeros(3), G, np.zeros((3, 3)))
    np.testing.assert_allclose(site_occupations(state), [1.0, 0.0, 2.0])


@given(complex_vectors)
def test_density_matrix_trace_is_photon_number(alpha):
    for state in (MeanFieldState(alpha), CumulantState.coherent(alpha)):
        rho = single_particle_density_matrix(state)
        assert abs(np.trace(rho).real - total_photon_number(state)) < 1e-9 * max(1, total_photon_number(state))


def test_condensate_fraction():
    alpha = np.array([1.0, 2.0j, 0.5])
    assert condensate_fraction(MeanFieldState(alpha)) == pytest.approx(1.0)
    coherent = CumulantState.coherent(alpha)
    assert condensate_fraction(coherent) == pytest.approx(1.0)
    thermal = CumulantState(np.zeros(3), np.eye(3, dtype=complex), np.zeros((3, 3)))
    assert condensate_fraction(thermal) == pytest.approx(1 / 3)
    with pytest.raises(UndefinedObservableError):
        condensate_fraction(CumulantState.vacuum(3))


def test_condensate_fraction_warns_on_negative_eigenvalue(caplog):
    G = np.diag([2.0, -0.5, 0.0]).astype(complex)
    with caplog.at_level(logging.WARNING, logger="tiltcav"):
        value = condensate_fraction(CumulantState(np.zeros(3), G, np.zeros((3, 3))))
    assert value == pytest.approx(2.0 / 1.5)
    assert "closure" in caplog.text


# --------------------------------------------------------------------------
# spectral analysis and classification on synthetic series


def test_spectral_analysis_pure_tone():
    dt = 0.5
    t = dt * np.arange(1200)
    f0, frac = spectral_analysis(10 + np.cos(2 * np.pi * t / 40.0), dt)
    assert f0 == pytest.approx(1 / 40.0, rel=0.02)
    assert frac > 0.95


def test_spectral_analysis_finds_subharmonic_fundamental():
    dt = 0.5
    t = dt * np.arange(2400)
    x = 10 + np.cos(2 * np.pi * t / 20.0) + 0.05 * np.cos(2 * np.pi * t / 40.0)
    f0, frac = spectral_analysis(x, dt)
    assert f0 == pytest.approx(1 / 40.0, rel=0.02)
    assert frac > 0.95


def test_spectral_analysis_noise_is_spread():
    x = 10 + np.random.default_rng(0).standard_normal(2000)
    _, frac = spectral_analysis(x, 0.5)
    assert frac < 0.2


def test_spectral_analysis_ignores_slow_lines():
    dt = 0.5
    t = dt * np.arange(1200)  # window of 600: a period of 300 repeats only twice
    f0, _ = spectral_analysis(10 + np.cos(2 * np.pi * t / 300.0) + 0.1 * np.cos(2 * np.pi * t / 25.0), dt)
    assert f0 == pytest.approx(1 / 25.0, rel=0.02)


def test_classify_synthetic_regimes():
    t = 0.5 * np.arange(2401)
    stationary = classify(synthetic(100 + 0.1 * np.sin(t)), BASIS, t_start=0.0)
    assert stationary.label == STATIONARY and stationary.period is None
    oscillatory = classify(synthetic(100 + 30 * np.sin(2 * np.pi * t / 41.4)), BASIS, t_start=0.0)
    assert oscillatory.label == OSCILLATORY
    assert oscillatory.period == pytest.approx(41.4, rel=0.02)
    noise = 100 + 30 * np.random.default_rng(1).standard_normal(t.size)
    chaotic = classify(synthetic(noise), BASIS, t_start=0.0)
    assert chaotic.label == CHAOTIC and chaotic.period is None


def test_classify_short_window_is_inconclusive():
    t = 0.5 * np.arange(200)  # 100 time units < 10 Bloch periods of 12.6
    res = classify(synthetic(100 + 30 * np.sin(t)), BASIS, t_start=0.0)
    assert res.label == INCONCLUSIVE
    assert "Bloch" in res.diagnostics


def test_classify_window_default_and_record():
    t = 0.5 * np.arange(2401)
    traj = synthetic(np.where(t < 600, 1 + t, 100.0))
    res = classify(traj, BASIS)  # default window starts at 6 / kappa = 600
    assert res.label == STATIONARY and res.delta_n == 0.0
    rec = res.to_record()
    assert set(rec) >= {"label", "delta_n", "avg_max_fidelity", "theta", "period", "N0_over_N"}
    assert rec["N0_over_N"] is None


def test_classify_reports_condensate_fraction_for_cumulant_runs():
    t = 0.5 * np.arange(2401)
    alpha = BASIS.row(0)
    state = CumulantState.coherent(alpha, time=t[-1])
    traj = synthetic(np.full(t.size, 1.0), method="cumulant2", snapshots=[state])
    assert classify(traj, BASIS).n0_over_n == pytest.approx(1.0)


def test_classify_needs_uniform_grid():
    traj = synthetic(100 + 30 * np.sin(np.arange(2000)))
    traj.times[1500] += 0.1
    with pytest.raises(UndefinedObservableError):
        classify(traj, BASIS, t_start=0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 50.0))
def test_classify_is_deterministic(seed, amplitude):
    rng = np.random.default_rng(seed)
    t = 0.5 * np.arange(1601)
    series = 100 + amplitude * np.sin(2 * np.pi * t / 37.0) + rng.standard_normal(t.size)
    a = classify(synthetic(series), BASIS, t_start=0.0)
    b = classify(synthetic(series.copy()), BASIS, t_start=0.0)
    assert a == b


# --------------------------------------------------------------------------
# periodicity diagnostics


def test_autocorrelation_period_of_synthetic_pattern():
    dt = 0.25
    t = dt * np.arange(800)
    occ = np.stack([1 + np.cos(2 * np.pi * t / 12.3 + k) for k in range(5)], axis=1)
    assert autocorrelation_period(t, occ, 12.0) == pytest.approx(12.3, rel=1e-3)


def test_autocorrelation_needs_long_enough_series():
    t = 0.5 * np.arange(20)
    with pytest.raises(UndefinedObservableError):
        autocorrelation_period(t, np.ones((20, 3)), 50.0)


def test_bloch_oscillation_period():
    p = LatticeParams(sites=41, kerr=0.0, loss=0.0, tilt=0.5, pump=PumpProfile.from_mapping({0: 0.0}))
    alpha = np.zeros(41, complex)
    alpha[20] = 1.0
    traj = integrate(MeanFieldState(alpha), p, 130.0, sample_dt=0.05, rtol=1e-10, atol=1e-12)
    T = autocorrelation_period(traj.times, traj.occupations, 2 * np.pi / 0.5)
    assert T == pytest.approx(2 * np.pi / 0.5, rel=1e-3)


def test_limit_cycle_return_on_closed_and_open_curves():
    t = 0.1 * np.arange(3000)
    circle = np.exp(2j * np.pi * t / 10.0)[:, None] * np.array([1.0, 0.5])
    traj = synthetic(np.ones(t.size), alpha=circle, dt=0.1)
    assert limit_cycle_return(traj, 10.0) < 1e-3
    spiral = np.exp(-0.03 * t)[:, None] * circle  # shrinks by a quarter per turn at first
    assert limit_cycle_return(synthetic(np.ones(t.size), alpha=spiral, dt=0.1), 10.0) > 0.05


def test_limit_cycle_return_errors():
    with pytest.raises(UndefinedObservableError):
        limit_cycle_return(synthetic(np.ones(50), alpha=np.ones((50, 2), complex), dt=0.1), 10.0)
    still = synthetic(np.ones(500), alpha=np.ones((500, 2), complex), dt=0.1)
    with pytest.raises(UndefinedObservableError):
        limit_cycle_return(still, 10.0)
