"""Static circuit model: line modes, coupler mutual inductance, couplings and rates.

All quantities are SI internally (rad/s, s, H, F, ohm). The JSON device file
uses laboratory units (Hz, fF, nH, pF/m, nH/m, us, ns) and is converted on load.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class InvalidParameterError(ValueError):
    """A physical parameter is outside its allowed range."""


class SingularCouplerError(ArithmeticError):
    """The coupler mutual-inductance denominator vanishes."""


@dataclass(frozen=True)
class LineParams:
    specific_capacitance: float  # F/m
    specific_inductance: float  # H/m
    length: float  # m
    mean_quality_factor: float | None = None

    def __post_init__(self):
        for name in ("specific_capacitance", "specific_inductance", "length"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.mean_quality_factor is not None and not self.mean_quality_factor > 0:
            raise InvalidParameterError("mean_quality_factor must be > 0 when given")

    @property
    def characteristic_impedance(self) -> float:
        return math.sqrt(self.specific_inductance / self.specific_capacitance)

    @property
    def travel_time(self) -> float:
        """Nominal one-way photon travel time from the per-length constants."""
        return self.length * math.sqrt(self.specific_inductance * self.specific_capacitance)

    @property
    def mode_inductance(self) -> float:
        return 0.5 * self.specific_inductance * self.length


@dataclass(frozen=True)
class ModeSpec:
    index_n: int
    omega_n: float
    L_n: float
    C_n: float
    R_n: float
    Q_n: float
    T_ell: float
    omega_fsr: float


@dataclass(frozen=True)
class QubitParams:
    C_q: float
    L_J: float
    idle_frequency: float  # rad/s
    T1: float
    T2: float
    F_g: float = 1.0
    F_e: float = 1.0
    anharmonicity: float = 0.0  # rad/s, documentation only
    name: str = ""

    def __post_init__(self):
        for name in ("C_q", "L_J", "idle_frequency", "T1", "T2"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("F_g", "F_e"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if self.T2 > 2.0 * self.T1:
            warnings.warn(f"T2 = {self.T2:g} s exceeds 2*T1 = {2 * self.T1:g} s", stacklevel=2)

    @property
    def dephasing_rate(self) -> float:
        """Pure-dephasing rate 1/T_phi = 1/T2 - 1/(2 T1)."""
        rate = 1.0 / self.T2 - 0.5 / self.T1
        if rate < 0:
            raise InvalidParameterError(
                f"1/T2 - 1/(2T1) = {rate:g} < 0; cannot extract a dephasing rate"
            )
        return rate


@dataclass(frozen=True)
class CouplerParams:
    L_g: float
    L_w: float
    L_T: float

    def __post_init__(self):
        if not (self.L_g > 0 and self.L_T > 0):
            raise InvalidParameterError("L_g and L_T must be > 0")
        if self.L_w < 0:
            raise InvalidParameterError("L_w must be >= 0")

    @property
    def screening(self) -> float:
        """Ratio (2 L_g + L_w) / L_T entering the flux-phase relation."""
        return (2.0 * self.L_g + self.L_w) / self.L_T

    @property
    def delta_off(self) -> float:
        return 0.5 * math.pi + self.screening


@dataclass(frozen=True)
class DeviceParams:
    """Both qubit nodes plus the line; mirrors the device-parameter table."""

    line: LineParams
    qubits: tuple[QubitParams, QubitParams]
    couplers: tuple[CouplerParams, CouplerParams]
    travel_time: float  # measured one-way travel time T_ell, s
    omega_fsr: float  # calibrated free spectral range, rad/s
    relay_mode: int = 73
    readout: tuple[dict, ...] = field(default=(), compare=False)

    def modes(self, n_values: Iterable[int]) -> list[ModeSpec]:
        return mode_spectrum(self.line, n_values, omega_fsr=self.omega_fsr)

    def mode(self, n: int | None = None) -> ModeSpec:
        return self.modes([self.relay_mode if n is None else n])[0]

    def nearest_mode(self, qubit: int) -> ModeSpec:
        n = max(1, int(round(self.qubits[qubit].idle_frequency / self.omega_fsr)))
        return self.mode(n)

    def replace_qubit(self, index: int, **changes) -> "DeviceParams":
        from dataclasses import replace

        qubits = list(self.qubits)
        qubits[index] = replace(qubits[index], **changes)
        return replace(self, qubits=tuple(qubits))


def mode_spectrum(
    line: LineParams, n_range: Iterable[int], omega_fsr: float | None = None
) -> list[ModeSpec]:
    """Lumped series-RLC equivalents of the standing modes ``n_range``.

    Without ``omega_fsr`` the free spectral range follows from the nominal
    travel time; passing a calibrated value overrides it.
    """
    ns = [int(n) for n in n_range]
    if not ns:
        raise InvalidParameterError("n_range is empty")
    if min(ns) < 1:
        raise InvalidParameterError("mode indices must be >= 1")
    if omega_fsr is None:
        T_ell = line.travel_time
        omega_fsr = math.pi / T_ell
    else:
        if not omega_fsr > 0:
            raise InvalidParameterError("omega_fsr must be > 0")
        T_ell = math.pi / omega_fsr
    L_n = line.mode_inductance
    out = []
    for n in ns:
        omega_n = n * omega_fsr
        C_n = 1.0 / (n**2 * omega_fsr**2 * L_n)
        if line.mean_quality_factor is None:
            R_n, Q_n = 0.0, math.inf
        else:
            Q_n = line.mean_quality_factor
            R_n = omega_n * L_n / Q_n
        out.append(ModeSpec(n, omega_n, L_n, C_n, R_n, Q_n, T_ell, omega_fsr))
    return out


def input_impedance(line: LineParams, omega, attenuation: float = 0.0, omega_fsr=None):
    """Z_in = Z0 tanh((alpha + i beta) l) of the shorted line at angular frequency omega."""
    if omega_fsr is None:
        omega_fsr = math.pi / line.travel_time
    beta_l = math.pi * np.asarray(omega, dtype=float) / omega_fsr
    return line.characteristic_impedance * np.tanh(attenuation * line.length + 1j * beta_l)


def mutual_inductance(c: CouplerParams, delta):
    """Effective qubit-line mutual inductance M(delta) through the coupler."""
    delta = np.asarray(delta, dtype=float)
    cos_d = np.cos(delta)
    off = np.isclose(np.mod(delta - 0.5 * math.pi, math.pi), 0.0, atol=1e-12) | np.isclose(
        np.mod(delta - 0.5 * math.pi, math.pi), math.pi, atol=1e-12
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 2.0 * c.L_g + c.L_w + c.L_T / cos_d
        M = np.where(off, 0.0, c.L_g**2 / denom)
    bad = ~off & (np.abs(denom) <= 1e-12 * (2.0 * c.L_g + c.L_w + c.L_T))
    if np.any(bad):
        raise SingularCouplerError(
            f"mutual-inductance denominator vanishes at delta = {delta[bad].ravel()[0]!r}"
        )
    return M if M.ndim else float(M)


def coupling_g(q: QubitParams, m: ModeSpec, c: CouplerParams, delta):
    """Qubit-mode coupling g(delta) in rad/s (harmonic, weak-coupling limit)."""
    M = mutual_inductance(c, delta)
    scale = math.sqrt(q.idle_frequency * m.omega_n / ((c.L_g + q.L_J) * (c.L_g + m.L_n)))
    return -0.5 * M * scale


def decay_rate_kappa(g, omega_fsr: float):
    """Golden-rule emission rate into the line, kappa = 2 pi g^2 / omega_fsr."""
    if not omega_fsr > 0:
        raise InvalidParameterError("omega_fsr must be > 0")
    return TWO_PI * np.square(g) / omega_fsr


def qubit_frequency_shift(q: QubitParams, m: ModeSpec, c: CouplerParams, g):
    return -np.asarray(g) * math.sqrt((c.L_g + m.L_n) / (c.L_g + q.L_J))


def mode_frequency_shift(q: QubitParams, m: ModeSpec, c: CouplerParams, g):
    return -np.asarray(g) * math.sqrt((c.L_g + q.L_J) / (c.L_g + m.L_n))


def g_max(device: DeviceParams, qubit: int, n: int | None = None) -> float:
    mode = device.mode(n)
    return float(coupling_g(device.qubits[qubit], mode, device.couplers[qubit], math.pi))


def relay_couplings(
    device: DeviceParams, qubit: int, g_relay: float, modes: Sequence[int], single_g: bool = False
) -> np.ndarray:
    """Per-mode couplings for a coupler bias that gives ``g_relay`` on the relay mode.

    At fixed junction phase g_{i,n} scales as sqrt(omega_n); ``single_g`` uses one
    value for every mode, as in the usual spectroscopic calibration.
    """
    modes = np.asarray(modes, dtype=float)
    if single_g:
        return np.full(modes.shape, float(g_relay))
    return g_relay * np.sqrt(modes / device.relay_mode)


# ---------------------------------------------------------------- file format

_US, _NS, _NH, _FF = 1e-6, 1e-9, 1e-9, 1e-15


def device_from_dict(d: dict) -> DeviceParams:
    ln = d["line"]
    line = LineParams(
        specific_capacitance=ln["specific_capacitance_pF_per_m"] * 1e-12,
        specific_inductance=ln["specific_inductance_nH_per_m"] * 1e-9,
        length=ln["length_m"],
        mean_quality_factor=ln.get("mean_quality_factor"),
    )
    qubits, couplers, readout = [], [], []
    for qd in d["qubits"]:
        qubits.append(
            QubitParams(
                C_q=qd["C_q_fF"] * _FF,
                L_J=qd["L_J_nH"] * _NH,
                idle_frequency=TWO_PI * qd["frequency_Hz"],
                T1=qd["T1_us"] * _US,
                T2=qd["T2_us"] * _US,
                F_g=qd["F_g"],
                F_e=qd["F_e"],
                anharmonicity=TWO_PI * qd.get("anharmonicity_Hz", 0.0),
                name=qd.get("name", ""),
            )
        )
        couplers.append(CouplerParams(qd["L_g_nH"] * _NH, qd["L_w_nH"] * _NH, qd["L_T_nH"] * _NH))
        readout.append({k: qd[k] for k in qd if k.startswith("readout_")})
    if len(qubits) != 2:
        raise InvalidParameterError("device file must describe exactly two qubits")
    travel = ln.get("travel_time_ns")
    travel = travel * _NS if travel is not None else line.travel_time
    fsr_hz = ln.get("fsr_Hz")
    omega_fsr = TWO_PI * fsr_hz if fsr_hz is not None else math.pi / travel
    return DeviceParams(
        line=line,
        qubits=tuple(qubits),
        couplers=tuple(couplers),
        travel_time=travel,
        omega_fsr=omega_fsr,
        relay_mode=int(ln.get("relay_mode", 73)),
        readout=tuple(readout),
    )


def device_to_dict(dev: DeviceParams) -> dict:
    line = {
        "specific_capacitance_pF_per_m": dev.line.specific_capacitance / 1e-12,
        "specific_inductance_nH_per_m": dev.line.specific_inductance / 1e-9,
        "length_m": dev.line.length,
        "travel_time_ns": dev.travel_time / _NS,
        "fsr_Hz": dev.omega_fsr / TWO_PI,
        "relay_mode": dev.relay_mode,
    }
    if dev.line.mean_quality_factor is not None:
        line["mean_quality_factor"] = dev.line.mean_quality_factor
    qubits = []
    for i, (q, c) in enumerate(zip(dev.qubits, dev.couplers)):
        entry = {
            "name": q.name,
            "C_q_fF": q.C_q / _FF,
            "L_J_nH": q.L_J / _NH,
            "L_g_nH": c.L_g / _NH,
            "L_w_nH": c.L_w / _NH,
            "L_T_nH": c.L_T / _NH,
            "frequency_Hz": q.idle_frequency / TWO_PI,
            "anharmonicity_Hz": q.anharmonicity / TWO_PI,
            "T1_us": q.T1 / _US,
            "T2_us": q.T2 / _US,
            "F_g": q.F_g,
            "F_e": q.F_e,
        }
        if i < len(dev.readout):
            entry.update(dev.readout[i])
        qubits.append(entry)
    return {"line": line, "qubits": qubits}


def default_device_dict() -> dict:
    text = resources.files("remotebell").joinpath("data/default_device.json").read_text()
    return json.loads(text)


def load_device(path: str | Path | None = None) -> DeviceParams:
    """Load a device JSON file; ``None`` gives the bundled default device."""
    if path is None:
        return device_from_dict(default_device_dict())
    with open(path) as fh:
        return device_from_dict(json.load(fh))


__all__ = [
    "CouplerParams",
    "DeviceParams",
    "InvalidParameterError",
    "LineParams",
    "ModeSpec",
    "QubitParams",
    "SingularCouplerError",
    "TWO_PI",
    "coupling_g",
    "decay_rate_kappa",
    "default_device_dict",
    "device_from_dict",
    "device_to_dict",
    "g_max",
    "input_impedance",
    "load_device",
    "mode_frequency_shift",
    "mode_spectrum",
    "mutual_inductance",
    "qubit_frequency_shift",
    "relay_couplings",
]
