import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from remotebell import device as dm
from remotebell.device import (
    CouplerParams,
    InvalidParameterError,
    LineParams,
    SingularCouplerError,
    coupling_g,
    decay_rate_kappa,
    mode_frequency_shift,
    mode_spectrum,
    mutual_inductance,
    qubit_frequency_shift,
)

TWO_PI = 2 * math.pi


def test_nominal_line_quantities(device):
    line = device.line
    assert line.characteristic_impedance == pytest.approx(math.sqrt(402e-9 / 173e-12))
    assert line.characteristic_impedance == pytest.approx(48.2, abs=0.05)
    assert line.mode_inductance == pytest.approx(0.5 * 402e-9 * 0.78)
    assert line.travel_time == pytest.approx(0.78 * math.sqrt(402e-9 * 173e-12))


def test_fsr_from_travel_time():
    # pi / T with T = 6.3 ns
    assert math.pi / 6.3e-9 / TWO_PI / 1e6 == pytest.approx(79.37, abs=0.01)


def test_calibrated_relay_mode_frequency(device):
    m = device.mode(73)
    assert m.omega_n / TWO_PI == pytest.approx(73 * 78.68e6, rel=1e-12)
    assert m.omega_n / TWO_PI == pytest.approx(5.744e9, rel=1e-4)
    assert device.omega_fsr / TWO_PI == pytest.approx(78.68e6)
    assert device.travel_time == pytest.approx(6.3e-9)


def test_mode_lumped_elements(device):
    for m in device.modes(range(70, 77)):
        assert m.C_n == pytest.approx(1.0 / (m.index_n**2 * m.omega_fsr**2 * m.L_n))
        assert m.Q_n == pytest.approx(144000.0)
        assert m.omega_n * m.L_n / m.R_n == pytest.approx(m.Q_n)


def test_lossless_line_has_no_resistance():
    line = LineParams(173e-12, 402e-9, 0.78)
    m = mode_spectrum(line, [10])[0]
    assert m.R_n == 0.0
    assert m.omega_fsr == pytest.approx(math.pi / line.travel_time)


@pytest.mark.parametrize("bad", [dict(specific_capacitance=0.0), dict(length=-1.0)])
def test_invalid_line(bad):
    kw = dict(specific_capacitance=173e-12, specific_inductance=402e-9, length=0.78)
    kw.update(bad)
    with pytest.raises(InvalidParameterError):
        LineParams(**kw)


def test_invalid_mode_index():
    with pytest.raises(InvalidParameterError):
        mode_spectrum(LineParams(173e-12, 402e-9, 0.78), [0])


def test_mutual_inductance_examples(device):
    c = device.couplers[0]
    assert mutual_inductance(c, math.pi / 2) == 0.0
    assert mutual_inductance(c, math.pi) == pytest.approx(0.04e-18 / (0.5e-9 - 0.566e-9))
    assert mutual_inductance(c, math.pi) / 1e-9 == pytest.approx(-0.606, abs=1e-3)
    assert mutual_inductance(c, 0.0) == pytest.approx(0.2e-9**2 / (0.5e-9 + 0.566e-9))


def test_singular_coupler():
    # denominator 2 L_g + L_w + L_T / cos(delta) vanishes when L_T < 2 L_g + L_w
    c = CouplerParams(0.2e-9, 0.1e-9, 0.4e-9)
    with pytest.raises(SingularCouplerError):
        mutual_inductance(c, math.acos(-0.4 / 0.5))
    ok = CouplerParams(0.2e-9, 0.1e-9, 0.566e-9)
    assert np.isfinite(mutual_inductance(ok, np.linspace(math.pi / 2, math.pi, 50))).all()


def test_coupling_g_max(device):
    g1, g2 = dm.g_max(device, 0), dm.g_max(device, 1)
    assert 45 <= abs(g1) / TWO_PI / 1e6 <= 50
    assert 45 <= abs(g2) / TWO_PI / 1e6 <= 50
    # direct evaluation of -(M/2) sqrt(w_i w_n / ((L_g + L_J)(L_g + L_n)))
    M = 0.04e-18 / (0.5e-9 - 0.566e-9)
    wq, wn = TWO_PI * 5.809e9, TWO_PI * 73 * 78.68e6
    Ln = 0.5 * 402e-9 * 0.78
    ref = -M / 2 * math.sqrt(wq * wn / ((0.2e-9 + 8.34e-9) * (0.2e-9 + Ln)))
    assert g1 == pytest.approx(ref, rel=1e-12)


def test_coupling_off_exactly_zero(device):
    for q in range(2):
        assert coupling_g(device.qubits[q], device.mode(), device.couplers[q], math.pi / 2) == 0.0


def test_g_scales_with_sqrt_n(device):
    q, c = device.qubits[0], device.couplers[0]
    m1, m2 = device.mode(40), device.mode(80)
    # hold L_n fixed; only omega_n changes between modes
    assert m1.L_n == m2.L_n
    assert coupling_g(q, m2, c, math.pi) / coupling_g(q, m1, c, math.pi) == pytest.approx(math.sqrt(2))


def test_abs_g_maximal_at_pi(device):
    q, c, m = device.qubits[0], device.couplers[0], device.mode()
    d = np.linspace(math.pi / 2, math.pi, 2001)
    g = np.abs(coupling_g(q, m, c, d))
    assert np.argmax(g) == d.size - 1
    assert np.all(np.diff(g) >= 0)


def test_kappa_examples():
    assert decay_rate_kappa(TWO_PI * 47e6, TWO_PI * 79e6) / TWO_PI / 1e6 == pytest.approx(2 * math.pi * 47**2 / 79)
    assert 165 <= decay_rate_kappa(TWO_PI * 47e6, TWO_PI * 79e6) / TWO_PI / 1e6 <= 185
    assert decay_rate_kappa(0.0, 1.0) == 0.0
    assert decay_rate_kappa(TWO_PI * 5e6, TWO_PI * 79e6) / TWO_PI / 1e6 == pytest.approx(1.988, abs=1e-3)


def test_frequency_shift_at_gmax(device):
    q, c, m = device.qubits[0], device.couplers[0], device.mode()
    g = dm.g_max(device, 0)
    shift = qubit_frequency_shift(q, m, c, g) / TWO_PI / 1e6
    assert -220 <= shift <= -180
    assert qubit_frequency_shift(q, m, c, 0.0) == 0.0
    assert mode_frequency_shift(q, m, c, 0.0) == 0.0


def test_device_roundtrip(device):
    again = dm.device_from_dict(dm.device_to_dict(device))
    assert again == device


def test_dephasing_rate(device):
    q = device.qubits[0]
    assert q.dephasing_rate == pytest.approx(1 / 0.89e-6 - 1 / (2 * 16e-6))


def test_t2_above_2t1_warns_and_rate_rejects(device):
    with pytest.warns(UserWarning):
        q = device.replace_qubit(0, T2=40e-6).qubits[0]
    with pytest.raises(InvalidParameterError):
        q.dephasing_rate


@given(st.integers(1, 500), st.integers(1, 50))
def test_modes_equally_spaced(n0, count):
    line = LineParams(173e-12, 402e-9, 0.78)
    modes = mode_spectrum(line, range(n0, n0 + count + 1), omega_fsr=TWO_PI * 78.68e6)
    w = np.array([m.omega_n for m in modes])
    assert np.allclose(np.diff(w), TWO_PI * 78.68e6, rtol=1e-12)


@given(st.floats(1e5, 1e9))
def test_kappa_quadratic(g):
    assert decay_rate_kappa(2 * g, 1e9) == pytest.approx(4 * decay_rate_kappa(g, 1e9), rel=1e-12)


@given(st.floats(-1e9, 1e9).filter(lambda x: abs(x) > 1.0))
def test_shift_ratio_and_product(g):
    dev = dm.load_device()
    q, c, m = dev.qubits[1], dev.couplers[1], dev.mode()
    dq, dn = qubit_frequency_shift(q, m, c, g), mode_frequency_shift(q, m, c, g)
    assert dq / dn == pytest.approx((c.L_g + m.L_n) / (c.L_g + q.L_J), rel=1e-12)
    assert abs(dq * dn) == pytest.approx(g * g, rel=1e-12)
