"""Weak-coupling regime: qubits exchanging a single excitation with a few standing modes.

State space is the single-excitation manifold plus vacuum, in the order
``[Q1, Q2, mode_1 .. mode_N, vacuum]``. The frame rotates at the central mode,
so mode k sits at ``(k - c) * omega_fsr`` with c the central index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import qinfo
from .device import DeviceParams, relay_couplings
from .kernels import rk4_linear

SQRT2 = math.sqrt(2.0)
DEFAULT_DT = 0.01e-9
# RK4 is stable on the imaginary axis up to |lambda dt| = 2 sqrt(2)
RK4_STABILITY = 2.5


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message}; try dt <= {suggested_dt:.3e} s")
        self.suggested_dt = suggested_dt


@dataclass
class MultimodeSystem:
    """Two qubits, N modes, their couplings and decoherence.

    ``couplings`` holds the *on* values g_{i,n} (rad/s); a schedule stage
    selects which qubits are connected.
    """

    mode_numbers: np.ndarray
    omega_fsr: float
    couplings: np.ndarray
    qubit_detunings: np.ndarray = field(default_factory=lambda: np.zeros(2))
    T1: np.ndarray = field(default_factory=lambda: np.full(2, np.inf))
    dephasing_rates: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mode_kappa: np.ndarray | None = None
    anchor: float = 0.0

    def __post_init__(self):
        self.mode_numbers = np.asarray(self.mode_numbers, dtype=int)
        self.couplings = np.asarray(self.couplings, dtype=float).reshape(2, -1)
        self.qubit_detunings = np.asarray(self.qubit_detunings, dtype=float)
        self.T1 = np.asarray(self.T1, dtype=float)
        self.dephasing_rates = np.asarray(self.dephasing_rates, dtype=float)
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.couplings.shape[1] != self.n_modes:
            raise ValueError("couplings must have shape (2, N)")
        if not np.all(np.isfinite(self.couplings)):
            raise ValueError("couplings must be finite")
        if np.any(self.dephasing_rates < 0) or np.any(self.T1 <= 0):
            raise ValueError("need T1 > 0 and dephasing rates >= 0")

    @property
    def n_modes(self) -> int:
        return int(self.mode_numbers.size)

    @property
    def dim(self) -> int:
        return self.n_modes + 3

    @property
    def vacuum(self) -> int:
        return self.n_modes + 2

    @property
    def center(self) -> int:
        return (self.n_modes - 1) // 2

    def mode_offsets(self) -> np.ndarray:
        """Mode frequencies in the rotating frame (rad/s)."""
        return (np.arange(self.n_modes) - self.center) * self.omega_fsr

    @classmethod
    def from_device(
        cls,
        device: DeviceParams,
        n_modes: int = 5,
        g: Sequence[float] | float = 2 * math.pi * 5e6,
        single_g: bool = False,
        decoherence: bool = True,
        mode_loss: bool = False,
    ) -> "MultimodeSystem":
        """Modes centred on the relay mode, with ``g`` set on the relay mode for each qubit."""
        g = np.broadcast_to(np.asarray(g, dtype=float), (2,))
        c = (n_modes - 1) // 2
        ns = device.relay_mode + np.arange(n_modes) - c
        coup = np.array([relay_couplings(device, q, g[q], ns, single_g) for q in range(2)])
        kw = {}
        if decoherence:
            kw["T1"] = np.array([q.T1 for q in device.qubits])
            kw["dephasing_rates"] = np.array([q.dephasing_rate for q in device.qubits])
        if mode_loss:
            kw["mode_kappa"] = np.array([m.omega_n / m.Q_n for m in device.modes(ns)])
        return cls(
            mode_numbers=ns,
            omega_fsr=device.omega_fsr,
            couplings=coup,
            anchor=device.relay_mode * device.omega_fsr,
            **kw,
        )

    def without_decoherence(self) -> "MultimodeSystem":
        return replace(self, T1=np.full(2, np.inf), dephasing_rates=np.zeros(2), mode_kappa=None)


@dataclass(frozen=True)
class Stage:
    """Piecewise-constant segment: which qubits are coupled, their detunings, dephasing scale."""

    duration: float
    coupled: tuple[bool, bool] = (False, False)
    detunings: tuple[float, float] | None = None
    tphi_scale: tuple[float, float] = (1.0, 1.0)


@dataclass
class SimTrace:
    times: np.ndarray
    P_e1: np.ndarray
    P_e2: np.ndarray
    P_modes: np.ndarray
    mode_numbers: np.ndarray

    def to_csv(self, path) -> None:
        cols = ["time_ns", "P_e1", "P_e2"] + [f"P_mode_{n}" for n in self.mode_numbers]
        data = np.column_stack([self.times * 1e9, self.P_e1, self.P_e2, self.P_modes])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.12e")


def hamiltonian(sys: MultimodeSystem, coupled=(True, True), detunings=None) -> np.ndarray:
    N, d = sys.n_modes, sys.dim
    H = np.zeros((d, d), dtype=complex)
    det = sys.qubit_detunings if detunings is None else np.asarray(detunings, dtype=float)
    H[0, 0], H[1, 1] = det[0], det[1]
    idx = np.arange(2, N + 2)
    H[idx, idx] = sys.mode_offsets()
    for q in range(2):
        if coupled[q]:
            H[q, idx] = sys.couplings[q]
            H[idx, q] = sys.couplings[q]
    return H


def hamiltonian_eigenfrequencies(sys: MultimodeSystem, qubit_detuning_sweep, qubit: int = 0):
    """Sorted eigenvalues of the single-excitation block while sweeping one qubit.

    The other qubit is included only when its couplings are nonzero. Detunings
    are relative to the rotating frame (rad/s). Returns shape (len(sweep), dim).
    """
    sweep = np.atleast_1d(np.asarray(qubit_detuning_sweep, dtype=float))
    other = 1 - qubit
    keep = [qubit] + ([other] if np.any(sys.couplings[other] != 0) else [])
    keep += list(range(2, sys.n_modes + 2))
    out = np.empty((sweep.size, len(keep)))
    det = sys.qubit_detunings.copy()
    for k, x in enumerate(sweep):
        det[qubit] = x
        H = hamiltonian(sys, (True, True), det)[np.ix_(keep, keep)]
        out[k] = np.linalg.eigvalsh(H)
    return out


def collapse_operators(sys: MultimodeSystem, tphi_scale=(1.0, 1.0)) -> list[np.ndarray]:
    d, vac = sys.dim, sys.vacuum
    ops = []
    for q in range(2):
        if np.isfinite(sys.T1[q]):
            L = np.zeros((d, d), dtype=complex)
            L[vac, q] = math.sqrt(1.0 / sys.T1[q])
            ops.append(L)
        rate = sys.dephasing_rates[q] / tphi_scale[q]
        if rate > 0:
            # coherences to |q> decay at 'rate'
            L = np.zeros((d, d), dtype=complex)
            L[q, q] = math.sqrt(2.0 * rate)
            ops.append(L)
    if sys.mode_kappa is not None:
        for k, kap in enumerate(sys.mode_kappa):
            L = np.zeros((d, d), dtype=complex)
            L[vac, 2 + k] = math.sqrt(kap)
            ops.append(L)
    return ops


def liouvillian(H: np.ndarray, ops: Sequence[np.ndarray]) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    d = H.shape[0]
    I = np.eye(d)
    Lv = -1j * (np.kron(H, I) - np.kron(I, H.T))
    for L in ops:
        LdL = L.conj().T @ L
        Lv += np.kron(L, L.conj()) - 0.5 * np.kron(LdL, I) - 0.5 * np.kron(I, LdL.T)
    return Lv


def _populations(vecs: np.ndarray, d: int) -> np.ndarray:
    diag = np.arange(d) * (d + 1)
    return vecs[:, diag].real


def lindblad_evolve(
    sys: MultimodeSystem,
    initial,
    schedule: Sequence[Stage],
    t_final: float | None = None,
    dt: float = DEFAULT_DT,
    record_every: int = 100,
):
    """RK4 on the vectorised master equation through a piecewise-constant schedule.

    Each stage is integrated with the largest step <= ``dt`` that divides its
    duration exactly. Returns ``(rho_final, SimTrace)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rho = np.asarray(initial, dtype=complex)
    if rho.ndim == 1:
        rho = qinfo.dm(rho)
    d = sys.dim
    if rho.shape != (d, d):
        raise ValueError(f"initial state must be {d}x{d}")
    total = sum(s.duration for s in schedule)
    if t_final is None:
        t_final = total
    if t_final > total * (1 + 1e-12) + 1e-18:
        raise ValueError("schedule does not cover t_final")
    v = rho.ravel().copy()
    times, recs = [np.array([0.0])], [v[None, :]]
    t = 0.0
    for st in schedule:
        dur = min(st.duration, t_final - t)
        if dur <= 0:
            break
        Lv = liouvillian(hamiltonian(sys, st.coupled, st.detunings), collapse_operators(sys, st.tphi_scale))
        radius = float(np.max(np.abs(np.linalg.eigvals(Lv))))
        nsteps = max(1, int(math.ceil(dur / dt - 1e-9)))
        h = dur / nsteps
        if radius * h > RK4_STABILITY:
            raise IntegrationError("step exceeds the RK4 stability region", 2.0 / radius)
        v, rec = rk4_linear(Lv, v, h, nsteps, record_every)
        tr = sum(v[k * (d + 1)] for k in range(d)).real
        if abs(tr - 1.0) > 1e-6 or not np.all(np.isfinite(v)):
            raise IntegrationError(f"trace drifted to {tr!r}", 0.5 * h)
        times.append(t + h * record_every * np.arange(1, rec.shape[0]))
        recs.append(rec[1:])
        t += dur
    rec = np.vstack(recs)
    pops = _populations(rec, d)
    trace = SimTrace(
        times=np.concatenate(times),
        P_e1=pops[:, 0],
        P_e2=pops[:, 1],
        P_modes=pops[:, 2 : d - 1],
        mode_numbers=sys.mode_numbers.copy(),
    )
    rho = v.reshape(d, d)
    return 0.5 * (rho + rho.conj().T), trace


# ---------------------------------------------------------------- protocols


@dataclass(frozen=True)
class RelayProtocol:
    swap_time_1: float = 50e-9
    swap_time_2: float = 50e-9
    mode_index: int | None = None  # position in the mode list, default central
    sqrt2_dephasing: bool = True

    def __post_init__(self):
        if self.swap_time_1 < 0 or self.swap_time_2 < 0:
            raise ValueError("swap times must be >= 0")

    def schedule(self, sys: MultimodeSystem) -> list[Stage]:
        k = sys.center if self.mode_index is None else self.mode_index
        det = float(sys.mode_offsets()[k])
        s = (SQRT2, SQRT2) if self.sqrt2_dephasing else (1.0, 1.0)
        return [
            Stage(self.swap_time_1, (True, False), (det, det), s),
            Stage(self.swap_time_2, (False, True), (det, det), s),
        ]


def embed_qubit(rho2, sys: MultimodeSystem, qubit: int = 0) -> np.ndarray:
    """Place a qubit density matrix (|g>, |e>) into the full space."""
    rho2 = np.asarray(rho2, dtype=complex)
    if rho2.ndim == 1:
        rho2 = qinfo.dm(rho2)
    idx = [sys.vacuum, qubit]
    out = np.zeros((sys.dim, sys.dim), dtype=complex)
    out[np.ix_(idx, idx)] = rho2
    return out


def reduce_to_qubit(rho, sys: MultimodeSystem, qubit: int = 1) -> np.ndarray:
    """Reduced state of one qubit; every other excitation counts as its ground state."""
    vac = sys.vacuum
    r = np.zeros((2, 2), dtype=complex)
    r[1, 1] = rho[qubit, qubit]
    r[0, 1], r[1, 0] = rho[vac, qubit], rho[qubit, vac]
    r[0, 0] = np.trace(rho) - rho[qubit, qubit]
    return r


def reduce_to_pair(rho, sys: MultimodeSystem) -> np.ndarray:
    """Two-qubit state in the order gg, ge, eg, ee after tracing out the modes."""
    # gg <- vacuum, ge <- Q2 excited, eg <- Q1 excited
    m = {0: sys.vacuum, 1: 1, 2: 0}
    r = np.zeros((4, 4), dtype=complex)
    for a, ia in m.items():
        for b, ib in m.items():
            r[a, b] = rho[ia, ib]
    r[0, 0] += sum(rho[2 + k, 2 + k] for k in range(sys.n_modes))
    return r


def relay_transfer(input_state, protocol: RelayProtocol, sys: MultimodeSystem, **kw):
    """Send a Q1 state through the relay mode to Q2; returns ``(rho_Q2, SimTrace)``."""
    rho0 = embed_qubit(input_state, sys, 0)
    rho, trace = lindblad_evolve(sys, rho0, protocol.schedule(sys), **kw)
    return reduce_to_qubit(rho, sys, 1), trace


def relay_bell(protocol: RelayProtocol, sys: MultimodeSystem, **kw):
    """Half swap from Q1 (``swap_time_1`` = tau_half) then full swap to Q2; returns (rho_4x4, SimTrace)."""
    rho0 = np.zeros((sys.dim, sys.dim), dtype=complex)
    rho0[0, 0] = 1.0
    rho, trace = lindblad_evolve(sys, rho0, protocol.schedule(sys), **kw)
    return reduce_to_pair(rho, sys), trace


def relay_metrics(
    sys: MultimodeSystem,
    swap_time: float = 50e-9,
    half_time: float = 25e-9,
    sqrt2_dephasing: bool = True,
    **kw,
) -> dict:
    """Process fidelity, Bell fidelity and concurrence of the relay protocols.

    The deterministic z phases picked up along the way are calibrated out:
    on Q2's output for the process, and as a relative phase for the Bell state.
    """
    proto = RelayProtocol(swap_time, swap_time, sqrt2_dephasing=sqrt2_dephasing)
    outs = [relay_transfer(psi, proto, sys, **kw)[0] for psi in qinfo.PROCESS_INPUTS]
    phi = qinfo.calibrate_output_phase(qinfo.PROCESS_INPUTS, outs)
    P = qinfo.phase_gate(-phi)
    outs = [P @ o @ P.conj().T for o in outs]
    chi = qinfo.process_tomography(qinfo.PROCESS_INPUTS, outs)
    rho4, _ = relay_bell(RelayProtocol(half_time, swap_time, sqrt2_dephasing=sqrt2_dephasing), sys, **kw)
    bphi, _ = qinfo.dynamical_phase_calibration(rho4, "singlet")
    rho4c = qinfo.rotate_qubit_phase(rho4, -bphi)
    return {
        "process_fidelity": qinfo.fidelity_process(chi),
        "bell_fidelity": qinfo.fidelity_state(rho4c, qinfo.BELL_SINGLET),
        "concurrence": qinfo.concurrence(rho4),
        "transfer_probability": float(outs[3][1, 1].real),
        "chi": chi,
        "rho_bell": rho4c,
        "output_phase": phi,
        "bell_phase": bphi,
    }
