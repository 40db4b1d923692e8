import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gaussian_step_rise_10_90
from remotebell.coupler import (
    CouplerWaveform,
    control_trace,
    delta_off,
    external_phase,
    shape_waveform,
    solve_junction_phase,
    waveform_from_dict,
)
from remotebell.device import CouplerParams
from remotebell.kernels import SolverError

NS = 1e-9


def test_delta_off_maps_to_pi_over_two(device):
    for c in device.couplers:
        assert solve_junction_phase(delta_off(c), c) == math.pi / 2
        assert external_phase(math.pi / 2, c) == pytest.approx(delta_off(c))


def test_pi_is_fixed_point(device):
    c = device.couplers[0]
    assert solve_junction_phase(math.pi, c) == pytest.approx(math.pi, abs=1e-12)


@given(st.floats(math.pi / 2, math.pi))
def test_phase_roundtrip(delta):
    c = CouplerParams(0.2e-9, 0.1e-9, 0.566e-9)
    x = external_phase(delta, c)
    assert solve_junction_phase(x, c) == pytest.approx(delta, abs=1e-11)


def test_vectorised_inverse_monotone(device):
    c = device.couplers[1]
    x = np.linspace(math.pi, delta_off(c), 500)
    d = solve_junction_phase(x, c)
    assert np.all(np.diff(d) < 0)
    assert np.max(np.abs(external_phase(d, c) - x)) < 1e-11


def test_non_monotone_coupler_branch():
    c = CouplerParams(0.2e-9, 0.1e-9, 0.3e-9)  # screening > 1
    assert c.screening > 1
    with pytest.raises(SolverError):
        solve_junction_phase(0.0, c)


def test_rect_without_filter_is_exact():
    w = CouplerWaveform(0.0, [(1 * NS, 2 * NS)], sample_dt=0.01 * NS)
    t = np.arange(0, 500) * 0.01 * NS
    f = w.filtered(t)
    assert set(np.unique(f)) == {0.0, 1.0}
    assert f[100] == 1.0 and f[99] == 0.0
    assert f[299] == 1.0 and f[300] == 0.0
    assert f.sum() == 200


def test_filtered_plateau_and_area():
    w = CouplerWaveform(2 * NS, [(20 * NS, 30 * NS)], sample_dt=0.005 * NS)
    t = w.default_times()
    f = w.filtered(t)
    assert f.max() == pytest.approx(1.0, abs=1e-9)
    assert f.min() >= -1e-15
    assert np.sum(f) * 0.005 * NS == pytest.approx(30 * NS, rel=1e-9)
    assert f[0] < 1e-5 and f[-1] < 1e-5


@pytest.mark.parametrize("w_ns", [1.0, 2.0, 3.0, 5.0])
def test_rise_time_matches_gaussian_step(w_ns):
    dt = 0.001 * NS
    w = CouplerWaveform(w_ns * NS, [(0.0, 60 * NS)], sample_dt=dt)
    t = w.default_times()
    f = w.filtered(t)
    first = t[: np.argmax(f > 0.99)]
    fe = f[: first.size]
    t10 = np.interp(0.1, fe, first)
    t90 = np.interp(0.9, fe, first)
    assert t90 - t10 == pytest.approx(gaussian_step_rise_10_90(w_ns * NS), rel=2e-3)
    assert (t90 - t10) / (w_ns * NS) == pytest.approx(1.0885, abs=2e-4)


def test_short_pulse_amplitude_reduced():
    w = CouplerWaveform(3 * NS, [(10 * NS, 1 * NS)], sample_dt=0.005 * NS)
    f = w.filtered(w.default_times())
    assert 0.25 < f.max() < 0.35  # erf-limited peak


def test_waveform_validation():
    with pytest.raises(ValueError):
        CouplerWaveform(-1.0)
    with pytest.raises(ValueError):
        CouplerWaveform(1 * NS, [(0, 5 * NS), (3 * NS, 1 * NS)])
    with pytest.raises(ValueError):
        CouplerWaveform(1 * NS, [(0, -1 * NS)])


def test_shape_waveform_off_exact(device):
    c = device.couplers[0]
    w = CouplerWaveform(0.0, [(1 * NS, 1 * NS)])
    t, x = shape_waveform(w, c, np.arange(0, 400) * 0.005 * NS)
    assert np.all(x[:200] == delta_off(c))
    assert np.all(x[200:] == math.pi)


def test_control_trace_off_gives_zero_coupling(device):
    w = CouplerWaveform(2 * NS, [(10 * NS, 10 * NS)])
    tr = control_trace(w, device.qubits[0], device.mode(), device.couplers[0])
    assert abs(tr.g[0]) < 1e-6 * abs(tr.g).max()
    before = control_trace(w, device.qubits[0], device.mode(), device.couplers[0], times=[-5 * NS, -4 * NS])
    assert np.all(before.g == 0.0) and np.all(before.kappa == 0.0)
    assert np.all(tr.delta_omega_q == 0.0)
    assert tr.kappa.max() / (2 * math.pi * 1e6) == pytest.approx(182.5, abs=1.0)
    unc = control_trace(w, device.qubits[0], device.mode(), device.couplers[0], compensated=False)
    assert unc.delta_omega_q.min() / (2 * math.pi * 1e6) == pytest.approx(-204.96, abs=0.5)


def test_kappa_monotone_in_envelope(device):
    w = CouplerWaveform(3 * NS, [(10 * NS, 20 * NS)])
    tr = control_trace(w, device.qubits[0], device.mode(), device.couplers[0])
    rising = tr.times < 20 * NS
    k = tr.kappa[rising]
    assert np.all(np.diff(k) >= -1e-6 * k.max())


def test_waveform_from_dict():
    w, comp = waveform_from_dict(
        {"w_fwhm_ns": 2, "segments": [{"start_ns": 1, "width_ns": 3}], "amplitude": 1.0, "compensated": False}
    )
    assert w.w_fwhm == pytest.approx(2 * NS)
    assert w.segments == [(1 * NS, 3 * NS)]
    assert w.amplitude_on == pytest.approx(math.pi)
    assert comp is False
