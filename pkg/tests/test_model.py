import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltcav.model import (ConfigError, LatticeParams, PumpProfile, RunSettings, check, detuning,
                           detunings, dump_config, load_config, site_indices, validate)


def test_site_labels_are_symmetric():
    assert site_indices(5).tolist() == [-2, -1, 0, 1, 2]
    assert LatticeParams().site_labels[0] == -20


def test_detuning_examples():
    p = LatticeParams(tilt=0.5, pump_center=0)
    assert detuning(p, 3) == 1.5
    assert detuning(p, -20) == -10.0
    assert detuning(LatticeParams(tilt=0.5, pump_center=2), 2) == 0.0
    with pytest.raises(IndexError):
        detuning(p, 21)


def test_detunings_vector():
    p = LatticeParams(sites=7, tilt=0.3, pump_center=1)
    np.testing.assert_allclose(detunings(p), 0.3 * (np.arange(-3, 4) - 1))


def test_gamma():
    assert LatticeParams(hopping=1.0, tilt=0.5).gamma == 4.0


@pytest.mark.parametrize("changes, fragment", [
    (dict(tilt=0.0), "tilt must be positive"),
    (dict(tilt=-1.0), "tilt must be positive"),
    (dict(sites=40), "odd"),
    (dict(loss=-0.1), "loss must be non-negative"),
    (dict(kerr=float("nan")), "kerr must be finite"),
    (dict(pump=PumpProfile.single_site(1.0, 30)), "outside lattice"),
])
def test_validation_messages(changes, fragment):
    problems = validate(LatticeParams(**changes))
    assert any(fragment in m for m in problems), problems
    with pytest.raises(ValueError):
        check(LatticeParams(**changes))


def test_defaults_are_valid():
    assert validate(LatticeParams()) == []


def test_pump_profile_array():
    pump = PumpProfile.from_mapping({-1: 0.5, 2: 2.0})
    arr = pump.as_array(5)
    np.testing.assert_allclose(arr, [0, 0.5, 0, 0, 2.0])
    assert pump.as_dict() == {-1: 0.5, 2: 2.0}


def test_run_settings_resolved_defaults():
    s = RunSettings().resolved(LatticeParams(loss=0.02))
    assert s.t_end == pytest.approx(600.0)
    assert s.window_start == pytest.approx(300.0)


def test_load_config_aliases_and_pump():
    text = """
[lattice]
L = 21
deltaOmega = 0.4
chi = 0.05
kappa = 0.02
j0 = 1

[pump]
amplitude = 2.0
site = -3

[run]
method = "cumulant2"
t_end = 50.0
"""
    params, run = load_config(text)
    assert params.sites == 21 and params.tilt == 0.4 and params.kerr == 0.05
    assert params.loss == 0.02 and params.pump_center == 1.0
    assert params.pump.as_dict() == {-3: 2.0}
    assert run.method == "cumulant2" and run.t_end == 50.0


@pytest.mark.parametrize("text, fragment", [
    ("[lattice]\nsites = 'x'\n", "sites"),
    ("[lattice]\nfoo = 1\n", "foo"),
    ("[lattice]\ntilt = -1.0\n", "tilt"),
    ("[mystery]\n", "mystery"),
    ("[lattice\n", "malformed"),
    ("[run]\nmethod = 'exact'\n", "method"),
    ("[pump]\namplitude = 1.0\n[pump.amplitudes]\n0 = 1.0\n", "either"),
    ("[pump.amplitudes]\nx = 1.0\n", "integer"),
])
def test_load_config_errors_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_config(text)


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=1e-3, max_value=1e2, allow_nan=False)


@st.composite
def lattice_params(draw):
    sites = 2 * draw(st.integers(1, 30)) + 1
    half = (sites - 1) // 2
    pump_sites = draw(st.lists(st.integers(-half, half), min_size=1, max_size=4, unique=True))
    pump = PumpProfile.from_mapping({j: draw(finite) for j in pump_sites})
    return LatticeParams(sites=sites, hopping=draw(st.floats(0, 10)), tilt=draw(positive),
                         pump_center=float(draw(st.integers(-half, half))), kerr=draw(st.floats(0, 1)),
                         loss=draw(st.floats(0, 1)), pump=pump)


@st.composite
def run_settings(draw):
    return RunSettings(
        method=draw(st.sampled_from(["meanfield", "cumulant2"])),
        t_end=draw(st.one_of(st.none(), positive)),
        rtol=draw(st.floats(1e-12, 1e-3)),
        sample_dt=draw(positive),
        snapshot_stride=draw(st.integers(0, 50)),
        seed=draw(st.integers(0, 2**31)),
        peak_fraction=draw(st.floats(0.1, 0.99)),
    )


@settings(max_examples=60, deadline=None)
@given(lattice_params(), run_settings())
def test_config_round_trip(params, run):
    again, run_again = load_config(dump_config(params, run))
    assert again == params
    assert run_again == run


@given(lattice_params())
def test_round_trip_without_run_section(params):
    again, run = load_config(dump_config(params))
    assert again == params and run == RunSettings()


@given(lattice_params(), st.integers(-100, 100))
def test_detuning_is_linear(params, j):
    half = params.half_width
    if -half <= j <= half:
        assert math.isclose(detuning(params, j), params.tilt * (j - params.pump_center), abs_tol=1e-12)
