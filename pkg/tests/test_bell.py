import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import chsh_bruteforce, random_density_matrix
from remotebell import bell, qinfo

seeds = st.integers(0, 2**32 - 1)
TRIPLET = qinfo.dm(qinfo.BELL_TRIPLET)
SINGLET = qinfo.dm(qinfo.BELL_SINGLET)
READOUT = (bell.ConfusionMatrix(0.984, 0.950), bell.ConfusionMatrix(0.984, 0.942))


@pytest.mark.parametrize("phi", [0.0, 0.7, math.pi / 2, -2.0])
def test_pre_rotation_maps_eigenstate_to_g(phi):
    plus = np.array([1, np.exp(1j * phi)]) / math.sqrt(2)
    out = bell.pre_rotation(phi) @ plus
    assert abs(out[0]) == pytest.approx(1.0, abs=1e-12)


def test_axis_vector_and_angle_agree():
    rho = random_density_matrix(np.random.default_rng(2), 4)
    a = bell.outcome_probabilities(rho, 0.4, 1.1)
    b = bell.outcome_probabilities(rho, [math.cos(0.4), math.sin(0.4), 0], [math.cos(1.1), math.sin(1.1), 0])
    assert np.allclose(a, b)
    with pytest.raises(bell.ConfigurationError):
        bell.outcome_probabilities(rho, [0, 0, 1], 0.0)


@given(seeds, st.floats(0, 2 * math.pi))
def test_chsh_matches_bruteforce(seed, theta):
    rho = random_density_matrix(np.random.default_rng(seed), 4)
    assert bell.chsh_S(rho, theta) == pytest.approx(chsh_bruteforce(rho, theta), abs=1e-10)


def test_tsirelson_bound_random_states():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        rho = random_density_matrix(rng, 4, rank=int(rng.integers(1, 5)))
        th = rng.uniform(0, 2 * math.pi)
        assert abs(bell.chsh_S(rho, th)) <= 2 * math.sqrt(2) + 1e-9


@given(seeds, st.floats(0, 2 * math.pi))
def test_separable_states_obey_classical_bound(seed, theta):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(3))
    rho = sum(
        wk * np.kron(random_density_matrix(rng, 2), random_density_matrix(rng, 2)) for wk in w
    )
    assert abs(bell.chsh_S(rho, theta)) <= 2 + 1e-9


def test_triplet_and_singlet_curves():
    th = np.linspace(0, 2 * math.pi, 73)
    St = np.array([bell.chsh_S(TRIPLET, x) for x in th])
    Ss = np.array([bell.chsh_S(SINGLET, x) for x in th])
    assert np.allclose(St, 2 * math.sqrt(2) * np.cos(th - math.pi / 4), atol=1e-12)
    assert np.allclose(Ss, -St, atol=1e-12)
    assert bell.chsh_S(TRIPLET, math.pi / 4) == pytest.approx(2 * math.sqrt(2))
    assert bell.chsh_S(SINGLET, 5 * math.pi / 4) == pytest.approx(2 * math.sqrt(2))


@given(seeds)
def test_local_z_phase_shifts_theta(seed):
    phi = np.random.default_rng(seed).uniform(-math.pi, math.pi)
    rho = qinfo.rotate_qubit_phase(TRIPLET, phi)
    assert bell.chsh_S(rho, math.pi / 4 + phi) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


@given(seeds)
def test_readout_roundtrip(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4))
    meas = bell.apply_readout(p, READOUT)
    assert meas.sum() == pytest.approx(1.0)
    back, clipped = bell.correct_readout(meas, READOUT)
    assert not clipped
    assert np.allclose(back, p, atol=1e-12)


def test_readout_visibility_scaling():
    # symmetric errors shrink each correlator by the product of visibilities
    conf = (bell.ConfusionMatrix(0.9, 0.9), bell.ConfusionMatrix(0.95, 0.95))
    th = math.pi / 4
    assert bell.chsh_S(TRIPLET, th, conf) == pytest.approx(0.8 * 0.9 * 2 * math.sqrt(2))


def test_singular_readout():
    conf = (bell.ConfusionMatrix(0.5, 0.5), bell.ConfusionMatrix(1.0, 1.0))
    with pytest.raises(bell.CorrectionError):
        bell.correct_readout(np.full(4, 0.25), conf)
    with pytest.raises(bell.ConfigurationError):
        bell.ConfusionMatrix(1.2, 0.9)


def test_clipping_flag():
    meas = np.array([0.0, 0.0, 0.0, 1.0])
    p, clipped = bell.correct_readout(meas, READOUT)
    assert clipped and np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_shots_deterministic():
    a = bell.sample_chsh(TRIPLET, 0.3, READOUT, 1000, seed=42)
    b = bell.sample_chsh(TRIPLET, 0.3, READOUT, 1000, seed=42)
    c = bell.sample_chsh(TRIPLET, 0.3, READOUT, 1000, seed=43)
    assert all(np.array_equal(a.counts[k], b.counts[k]) for k in bell.PAIRS)
    assert any(not np.array_equal(a.counts[k], c.counts[k]) for k in bell.PAIRS)
    assert all(a.total(k) == 1000 for k in bell.PAIRS)


def test_shot_estimate_converges():
    th = math.pi / 4
    shots = bell.sample_chsh(TRIPLET, th, READOUT, 1_000_000, seed=1)
    raw, _ = bell.chsh_from_shots(shots)
    cor, _ = bell.chsh_from_shots(shots, READOUT)
    assert raw == pytest.approx(bell.chsh_S(TRIPLET, th, READOUT), abs=5e-3)
    assert cor == pytest.approx(2 * math.sqrt(2), abs=5e-3)


def test_error_bars_agree_and_scale():
    th = 0.9
    shots = bell.sample_chsh(TRIPLET, th, READOUT, 10_000, seed=3)
    sa, sb = bell.chsh_error_bar(shots, READOUT, seed=3)
    assert sb == pytest.approx(sa, rel=0.1)
    probs = bell.chsh_probabilities(TRIPLET, th, READOUT)
    s1 = bell.analytic_sigma(probs, 10_000)
    s4 = bell.analytic_sigma(probs, 40_000)
    assert s1 / s4 == pytest.approx(2.0)


def test_error_bar_matches_repeat_spread():
    th = 0.9
    est = [
        bell.chsh_from_shots(bell.sample_chsh(TRIPLET, th, READOUT, 2000, seed=s))[0] for s in range(400)
    ]
    sigma = bell.analytic_sigma(bell.chsh_probabilities(TRIPLET, th, READOUT), 2000)
    assert np.std(est, ddof=1) == pytest.approx(sigma, rel=0.15)


def test_sweep_csv_and_argmax(tmp_path):
    sw = bell.chsh_sweep(TRIPLET, READOUT)
    assert sw.theta.size == 100
    th, s = sw.argmax("corrected")
    assert th == pytest.approx(math.pi / 4, abs=1e-3)
    assert s == pytest.approx(2 * math.sqrt(2), abs=1e-3)
    path = tmp_path / "chsh.csv"
    sw.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "theta_rad,S_raw,S_corrected,sigma_S_raw,sigma_S_corrected"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (100, 5)


def test_sampled_sweep_deterministic():
    a = bell.chsh_sweep(TRIPLET, READOUT, bell.theta_grid(8), 500, sampled=True, seed=9)
    b = bell.chsh_sweep(TRIPLET, READOUT, bell.theta_grid(8), 500, sampled=True, seed=9)
    assert np.array_equal(a.S_raw, b.S_raw) and np.array_equal(a.S_corrected, b.S_corrected)


def test_empty_grid():
    with pytest.raises(bell.ConfigurationError):
        bell.chsh_sweep(TRIPLET, READOUT, [])


@given(seeds)
def test_local_unitaries_preserve_max_s(seed):
    # a z phase on Q2 only shifts the theta axis
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, 4)
    phi = rng.uniform(-math.pi, math.pi)
    grid = np.linspace(0, 2 * math.pi, 361)
    a = max(bell.chsh_S(rho, t) for t in grid)
    b = max(bell.chsh_S(qinfo.rotate_qubit_phase(rho, phi), t) for t in grid)
    assert b == pytest.approx(a, abs=1e-3)

