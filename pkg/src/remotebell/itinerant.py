"""Strong, time-dependent coupling: itinerant photons on the line.

Each emitter obeys

    d sigma/dt = -i dw sigma - kappa/2 sigma + sqrt(kappa) a_in
    a_out      = sqrt(kappa) sigma - a_in

with a_in a delayed copy of some emitter's a_out. ``sigma`` is the amplitude
of the single excitation on the qubit, so P_e = |sigma|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson

from . import qinfo
from .coupler import ControlTrace, CouplerWaveform, control_trace
from .device import DeviceParams
from .kernels import delay_rk4

DEFAULT_DT = 0.005e-9
SQRT2 = math.sqrt(2.0)


class ConfigurationError(ValueError):
    pass


@dataclass
class PhotonEnvelope:
    times: np.ndarray
    flux: np.ndarray

    @property
    def probability(self) -> float:
        if self.times.size < 2:
            return 0.0
        return float(simpson(self.flux, x=self.times))

    def skewness(self) -> float:
        """Third standardised moment of the flux viewed as a distribution in time."""
        w = self.flux / self.probability
        mean = simpson(w * self.times, x=self.times)
        var = simpson(w * (self.times - mean) ** 2, x=self.times)
        return float(simpson(w * (self.times - mean) ** 3, x=self.times) / var**1.5)


@dataclass
class DelayRun:
    """Node-grid result of a delay-coupled integration."""

    times: np.ndarray
    sigma: np.ndarray
    a_out: np.ndarray
    a_in: np.ndarray
    kappa: np.ndarray
    src: tuple[int, ...]
    delay_steps: tuple[int, ...]
    a_out_left: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def P_e(self, e: int = 0) -> np.ndarray:
        return np.abs(self.sigma[e]) ** 2

    def envelope_out(self, e: int = 0) -> PhotonEnvelope:
        return PhotonEnvelope(self.times, np.abs(self.a_out[e]) ** 2)

    def envelope_in(self, e: int = 0) -> PhotonEnvelope:
        return PhotonEnvelope(self.times, np.abs(self.a_in[e]) ** 2)

    def in_flight(self, i: int) -> float:
        """Probability travelling on the line at node ``i``."""
        total = 0.0
        for c, s in enumerate(self.src):
            lo = max(0, i - self.delay_steps[c])
            if i > lo:
                total += self._flux_integral(s, lo, i)
        return total

    def _flux_integral(self, s: int, lo: int, hi: int) -> float:
        # Simpson between jump nodes: right limit at each piece's start, left limit at its end
        right = np.abs(self.a_out[s]) ** 2
        left = right if self.a_out_left is None else np.abs(self.a_out_left[s]) ** 2
        cuts = [lo] + [k for k in self._jumps(s) if lo < k < hi] + [hi]
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            f = right[a : b + 1].copy()
            f[-1] = left[b]
            total += simpson(f, dx=self.dt) if f.size > 2 else 0.5 * self.dt * (f[0] + f[-1])
        return total

    def _jumps(self, s: int) -> np.ndarray:
        if self.a_out_left is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(self.a_out_left[s] != self.a_out[s])

    def budget_error(self, stride: int = 50) -> float:
        """max |sum P_e + in-flight - initial| over every ``stride``-th node."""
        p0 = float(np.sum(np.abs(self.sigma[:, 0]) ** 2))
        worst = 0.0
        for i in range(0, self.times.size, stride):
            tot = float(np.sum(np.abs(self.sigma[:, i]) ** 2)) + self.in_flight(i)
            worst = max(worst, abs(tot - p0))
        return worst

    def to_csv(self, path) -> None:
        """Envelope table: time, outgoing flux of emitter 0, incoming flux of the last emitter, kappa_0."""
        last = len(self.src) - 1
        data = np.column_stack(
            [
                self.times * 1e9,
                np.abs(self.a_out[0]) ** 2,
                np.abs(self.a_in[last]) ** 2,
                self.kappa[0] / (2 * math.pi) / 1e6,
            ]
        )
        header = "time_ns,flux_out_1,flux_in_2,kappa1_over_2pi_MHz"
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12e")


# ------------------------------------------------------------ controls


def half_step_grid(t_start: float, t_final: float, dt: float) -> np.ndarray:
    n = int(math.ceil((t_final - t_start) / dt - 1e-9)) + 1
    return t_start + 0.5 * dt * np.arange(2 * n - 1)


def sample_control(
    waveform: CouplerWaveform,
    device: DeviceParams,
    qubit: int,
    times: np.ndarray,
    compensated: bool = True,
) -> ControlTrace:
    return control_trace(
        waveform, device.qubits[qubit], device.mode(), device.couplers[qubit], compensated, times
    )


def _check_controls(ctrls: Sequence[ControlTrace], t_final: float | None):
    t = np.asarray(ctrls[0].times)
    for c in ctrls[1:]:
        if c.times.shape != t.shape or np.max(np.abs(c.times - t)) > 1e-18:
            raise ConfigurationError("control traces must share one time grid")
    if t.size < 5 or t.size % 2 == 0:
        raise ConfigurationError("control grid must hold an odd number (>= 5) of half-step samples")
    h = np.diff(t)
    if np.max(np.abs(h - h[0])) > 1e-6 * h[0]:
        raise ConfigurationError("control grid has gaps or is not uniform")
    if t_final is not None and t[-1] < t_final - 1e-6 * h[0]:
        raise ConfigurationError(f"controls end at {t[-1]:.4e} s before t_final {t_final:.4e} s")
    return t, 2.0 * h[0]


def _delay_steps(delay: float, dt: float) -> int:
    k = delay / dt
    if abs(k - round(k)) > 1e-6:
        raise ConfigurationError(f"delay {delay:.6e} s is not a whole number of steps of {dt:.3e} s")
    return int(round(k))


def run_delay_system(
    ctrls: Sequence[ControlTrace],
    src: Sequence[int],
    delays: Sequence[float],
    sigma0: Sequence[complex],
    t_final: float | None = None,
    detuning_offset: Sequence[float] | None = None,
    backend=None,
) -> DelayRun:
    t, dt = _check_controls(ctrls, t_final)
    kap = np.array([c.kappa for c in ctrls])
    kap_left = np.array([c.kappa if c.kappa_left is None else c.kappa_left for c in ctrls])
    det = np.array([c.delta_omega_q for c in ctrls], dtype=float)
    if detuning_offset is not None:
        det = det + np.asarray(detuning_offset, dtype=float)[:, None]
    steps = [_delay_steps(d, dt) for d in delays]
    sigma, a_out, a_in, a_out_left = delay_rk4(
        kap, det, np.asarray(sigma0, complex), src, steps, dt, backend, kappa_left_h=kap_left
    )
    return DelayRun(t[::2], sigma, a_out, a_in, kap[:, ::2], tuple(src), tuple(steps), a_out_left)


def pingpong(ctrl: ControlTrace, delay_2Tl: float, t_final: float | None = None, backend=None) -> DelayRun:
    """Single qubit facing its own echo off the shorted far end."""
    return run_delay_system([ctrl], [0], [delay_2Tl], [1.0], t_final, backend=backend)


def pingpong_uncompensated(
    waveform: CouplerWaveform, device: DeviceParams, t_start: float, t_final: float, dt=DEFAULT_DT, qubit=0
) -> DelayRun:
    """Ping-pong with the coupler-induced qubit frequency shift left in."""
    t = half_step_grid(t_start, t_final, dt)
    ctrl = sample_control(waveform, device, qubit, t, compensated=False)
    return pingpong(ctrl, 2 * device.travel_time, t_final)


def two_qubit_transfer(
    ctrl1: ControlTrace,
    ctrl2: ControlTrace,
    delay_Tl: float,
    t_final: float | None = None,
    sigma0=(1.0, 0.0),
    detuning_2: float = 0.0,
    backend=None,
) -> DelayRun:
    """Emitters facing each other across the line, each receiving the other's output."""
    return run_delay_system(
        [ctrl1, ctrl2], [1, 0], [delay_Tl, delay_Tl], sigma0, t_final, (0.0, detuning_2), backend
    )


# ------------------------------------------------------------ protocols


def first_returns(run: DelayRun, delay: float, n: int = 3, e: int = 0) -> list[float]:
    """Peak P_e between the k-th and (k+1)-th echo arrival, k = 1..n, after emission at t = 0.

    The sampled maximum is refined with a parabola through its neighbours.
    """
    P = run.P_e(e)
    t = run.times
    tol = 1e-6 * run.dt
    out = []
    for k in range(1, n + 1):
        idx = np.flatnonzero((t >= k * delay - tol) & (t < (k + 1) * delay - tol))
        if idx.size == 0:
            out.append(float("nan"))
            continue
        i = int(idx[np.argmax(P[idx])])
        peak = float(P[i])
        if idx[0] < i < idx[-1]:
            y0, y1, y2 = P[i - 1], P[i], P[i + 1]
            denom = y0 - 2 * y1 + y2
            if denom < 0:
                peak = float(y1 - (y0 - y2) ** 2 / (8 * denom))
        out.append(peak)
    return out


def long_pulse_pingpong(device: DeviceParams, w_fwhm: float, compensated=True, t_final=60e-9, dt=DEFAULT_DT):
    """Coupler switched on at t = 0 and left on; returns the DelayRun."""
    wf = CouplerWaveform(w_fwhm, [(0.0, 2 * t_final)])
    t0 = min(0.0, wf.span[0])
    t = half_step_grid(t0, t_final, dt)
    ctrl = sample_control(wf, device, 0, t, compensated)
    return pingpong(ctrl, 2 * device.travel_time, t_final)


def switching_cases(device: DeviceParams, w_fwhm: float = 2e-9) -> dict:
    """First-return recapture for abrupt, shaped-compensated and shaped-uncompensated switching."""
    D = 2 * device.travel_time
    return {
        "abrupt": first_returns(long_pulse_pingpong(device, 0.0), D)[0],
        "shaped": first_returns(long_pulse_pingpong(device, w_fwhm, True), D)[0],
        "shaped_with_shift": first_returns(long_pulse_pingpong(device, w_fwhm, False), D)[0],
    }


def shaped_pingpong_capture(
    device: DeviceParams, tau_w: float, tau_g=10e-9, w_fwhm=3e-9, compensated=True, dt=DEFAULT_DT, qubit=0
) -> float:
    """Emit with one pulse, wait ``tau_w``, catch with an identical pulse; final P_e."""
    wf = CouplerWaveform(w_fwhm, [(0.0, tau_g), (tau_g + tau_w, tau_g)])
    t0, t1 = wf.span
    t1 = max(t1, 2 * device.travel_time) + dt
    t = half_step_grid(t0, t1, dt)
    run = pingpong(sample_control(wf, device, qubit, t, compensated), 2 * device.travel_time)
    return float(run.P_e(0)[-1])


def transfer_run(device: DeviceParams, t1_pulse: float, t2_pulse: float | None = None, w_fwhm=3e-9,
                 dt=DEFAULT_DT, start_2: float = 0.0, detuning_2: float = 0.0) -> DelayRun:
    """Q1 emits with Rect(0, t1_pulse), Q2 catches with Rect(start_2, t2_pulse)."""
    t2_pulse = t1_pulse if t2_pulse is None else t2_pulse
    w1 = CouplerWaveform(w_fwhm, [(0.0, t1_pulse)])
    w2 = CouplerWaveform(w_fwhm, [(start_2, t2_pulse)])
    t0 = min(w1.span[0], w2.span[0])
    t_end = max(w1.span[1], w2.span[1], t0 + 2 * device.travel_time) + device.travel_time
    t = half_step_grid(t0, t_end, dt)
    c1 = sample_control(w1, device, 0, t)
    c2 = sample_control(w2, device, 1, t)
    return two_qubit_transfer(c1, c2, device.travel_time, detuning_2=detuning_2)


def transfer_capture(device: DeviceParams, t_pulse: float, **kw) -> float:
    return float(transfer_run(device, t_pulse, **kw).P_e(1)[-1])


@dataclass
class SweepResult:
    parameter: np.ndarray
    value: np.ndarray
    argmax: float
    max: float


def capture_sweep(
    f: Callable[[float], float], values: Sequence[float], refine: bool = True, tol: float = 1e-11
) -> SweepResult:
    """Evaluate ``f`` on a grid and refine the best point by golden section within its neighbours."""
    x = np.asarray(values, dtype=float)
    y = np.array([f(v) for v in x])
    k = int(np.argmax(y))
    best_x, best_y = float(x[k]), float(y[k])
    if refine and x.size >= 3:
        lo = x[max(k - 1, 0)]
        hi = x[min(k + 1, x.size - 1)]
        rx, ry = qinfo.golden_maximize(f, lo, hi, tol)
        if ry > best_y:
            best_x, best_y = rx, ry
    return SweepResult(x, y, best_x, best_y)


# ------------------------------------------------------------ half-photon Bell


def emitted_fraction(waveform: CouplerWaveform, device: DeviceParams, qubit=0, dt=DEFAULT_DT) -> float:
    """1 - exp(-int kappa dt): emission into an empty line with compensated frequency."""
    t = waveform.default_times()
    t = half_step_grid(t[0], t[-1], dt)
    k = sample_control(waveform, device, qubit, t).kappa
    return float(1.0 - math.exp(-simpson(k, x=t)))


def calibrate_half_release(device: DeviceParams, w_fwhm=3e-9, target=0.5, tol=1e-4, hi=11.5e-9, dt=DEFAULT_DT):
    """Binary search for the pulse length that releases ``target`` of the excitation."""
    lo = 0.0
    f = lambda tau: emitted_fraction(CouplerWaveform(w_fwhm, [(0.0, tau)]), device, 0, dt)
    if f(hi) < target:
        raise ConfigurationError("upper bracket does not reach the target emission")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        p = f(mid)
        if abs(p - target) < 0.01 * tol:
            return mid, p
        if p < target:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    p = f(mid)
    if abs(p - target) > tol:
        raise ConfigurationError(f"half-release calibration stalled at {p:.6f}")
    return mid, p


def decohered_pair(a1: complex, a2: complex, device: DeviceParams, duration: float, tphi_scale=SQRT2):
    """Two-qubit density matrix (gg, ge, eg, ee) for a1|eg> + a2|ge> after closed-form decay."""
    q1, q2 = device.qubits
    p1 = abs(a1) ** 2 * math.exp(-duration / q1.T1)
    p2 = abs(a2) ** 2 * math.exp(-duration / q2.T1)
    damp = math.exp(
        -duration / (2 * q1.T1)
        - duration / (2 * q2.T1)
        - duration * q1.dephasing_rate / tphi_scale
        - duration * q2.dephasing_rate / tphi_scale
    )
    rho = np.zeros((4, 4), dtype=complex)
    rho[2, 2], rho[1, 1] = p1, p2
    rho[0, 0] = 1.0 - p1 - p2
    rho[2, 1] = a1 * np.conj(a2) * damp
    rho[1, 2] = np.conj(rho[2, 1])
    return rho


@dataclass
class HalfPhotonBell:
    rho: np.ndarray  # phase-calibrated onto the triplet
    rho_raw: np.ndarray
    phase: float
    tau_half: float
    emitted: float
    populations: tuple[float, float]
    run: DelayRun

    @property
    def fidelity(self) -> float:
        return qinfo.fidelity_state(self.rho, qinfo.BELL_TRIPLET)

    @property
    def concurrence(self) -> float:
        return qinfo.concurrence(self.rho)

    def emission_envelope(self) -> PhotonEnvelope:
        """Q1's emission into an empty line, kappa(t) exp(-int kappa), free of any reflections."""
        t, k = self.run.times, self.run.kappa[0]
        return PhotonEnvelope(t, k * np.exp(-cumulative_trapezoid(k, t, initial=0.0)))

    def envelope_skewness(self) -> float:
        return self.emission_envelope().skewness()


TRANSFER_GRID = np.arange(9.0, 16.01, 0.5) * 1e-9


def optimal_transfer_time(device: DeviceParams, w_fwhm=3e-9, dt=DEFAULT_DT, grid=TRANSFER_GRID) -> SweepResult:
    """Pulse length t maximising Q1 -> Q2 capture when both couplers run Rect(0, t)."""
    return capture_sweep(lambda x: transfer_capture(device, x, w_fwhm=w_fwhm, dt=dt), grid)


def half_photon_bell(
    device: DeviceParams,
    t_transfer: float | None = None,
    w_fwhm: float = 3e-9,
    dt: float = DEFAULT_DT,
    tphi_scale: float = SQRT2,
    tau_half: float | None = None,
) -> HalfPhotonBell:
    """Q1 releases half its excitation; Q2 catches with the transfer pulse.

    Q2 reuses the transfer-optimal pulse unless ``t_transfer`` is given.
    Decoherence is applied in closed form over the protocol length ``t_transfer``.
    """
    if t_transfer is None:
        t_transfer = optimal_transfer_time(device, w_fwhm, dt).argmax
    if tau_half is None:
        tau_half, emitted = calibrate_half_release(device, w_fwhm, dt=dt)
    else:
        emitted = emitted_fraction(CouplerWaveform(w_fwhm, [(0.0, tau_half)]), device, 0, dt)
    run = transfer_run(device, tau_half, t_transfer, w_fwhm, dt)
    a1, a2 = run.sigma[0, -1], run.sigma[1, -1]
    rho_raw = decohered_pair(a1, a2, device, t_transfer, tphi_scale)
    phi, _ = qinfo.dynamical_phase_calibration(rho_raw, "triplet")
    rho = qinfo.rotate_qubit_phase(rho_raw, -phi)
    return HalfPhotonBell(rho, rho_raw, phi, tau_half, emitted, (abs(a1) ** 2, abs(a2) ** 2), run)
