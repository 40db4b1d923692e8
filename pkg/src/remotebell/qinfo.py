"""Tomography reconstruction, physicality projections and figures of merit.

Conventions: single-qubit basis order (|g>, |e>); two-qubit states are
Q1 (x) Q2 in the order gg, ge, eg, ee. Process matrices use the unnormalised
operator basis {I, X, Y, Z} in that order, so the identity channel has
chi[0, 0] = 1.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Mapping, Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)
PAULI_LABELS = ("I", "X", "Y", "Z")
TWO_QUBIT_LABELS = ("gg", "ge", "eg", "ee")
TOMO_GATES = ("I", "X", "Y")

KET_G = np.array([1, 0], dtype=complex)
KET_E = np.array([0, 1], dtype=complex)
PROCESS_INPUTS = (
    KET_G,
    (KET_G - 1j * KET_E) / math.sqrt(2),
    (KET_G + KET_E) / math.sqrt(2),
    KET_E,
)
BELL_TRIPLET = np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2)
BELL_SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


class ValidationError(ValueError):
    """Input matrix is not a valid (Hermitian, PSD, unit-trace) object."""


class ConfigurationError(ValueError):
    """Incomplete or degenerate tomography data."""


class InvariantViolation(RuntimeError):
    pass


# ----------------------------------------------------------------- helpers


def dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def equator_rotation(phi: float, theta: float) -> np.ndarray:
    """exp(-i theta/2 (cos phi X + sin phi Y))."""
    axis = math.cos(phi) * X + math.sin(phi) * Y
    return math.cos(theta / 2) * I2 - 1j * math.sin(theta / 2) * axis


def phase_gate(phi: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * phi)])


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def validate_density_matrix(rho, tol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > max(tol, 1e-10):
        raise ValidationError("matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValidationError(f"trace {np.trace(rho).real:.12f} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValidationError("matrix has negative eigenvalues")
    return rho


def project_physical(rho) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalise the trace."""
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValidationError("no positive eigenvalues to keep")
    w = w / w.sum()
    return (v * w) @ v.conj().T


# --------------------------------------------------------- state tomography


def tomography_settings(n_qubits: int) -> list[tuple[str, ...]]:
    return list(itertools.product(TOMO_GATES, repeat=n_qubits))


def _tomo_gate(gate: str, phase: float) -> np.ndarray:
    if gate == "I":
        return I2.copy()
    if gate == "X":
        return equator_rotation(phase, math.pi / 2)
    if gate == "Y":
        return equator_rotation(phase + math.pi / 2, math.pi / 2)
    raise ConfigurationError(f"unknown tomography gate {gate!r}")


def measurement_operators(setting: Sequence[str], phases: Sequence[float] | None = None):
    """POVM elements U^dag |k><k| U for a pre-rotation setting, outcomes in binary order."""
    n = len(setting)
    phases = [0.0] * n if phases is None else list(phases)
    U = kron_all([_tomo_gate(g, p) for g, p in zip(setting, phases)])
    d = 2**n
    return [U.conj().T[:, [k]] @ U[[k], :] for k in range(d)]


def tomography_probabilities(rho, phases: Sequence[float] | None = None) -> dict:
    """Noiseless outcome probabilities for every tomography setting."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(math.log2(rho.shape[0])))
    out = {}
    for s in tomography_settings(n):
        ops = measurement_operators(s, phases)
        out[s] = np.array([np.trace(E @ rho).real for E in ops])
    return out


def state_tomography(
    probabilities: Mapping[tuple[str, ...], Sequence[float]],
    phases: Sequence[float] | None = None,
    project: bool = True,
) -> np.ndarray:
    """Linear-inversion reconstruction from per-setting outcome probabilities."""
    if not probabilities:
        raise ConfigurationError("no tomography data")
    n = len(next(iter(probabilities)))
    needed = tomography_settings(n)
    missing = [s for s in needed if tuple(s) not in probabilities]
    if missing:
        raise ConfigurationError(f"missing tomography settings: {missing}")
    rows, rhs = [], []
    for s in needed:
        p = np.asarray(probabilities[s], dtype=float)
        if p.shape != (2**n,):
            raise ConfigurationError(f"setting {s}: expected {2**n} probabilities")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ConfigurationError(f"setting {s}: probabilities sum to {p.sum()!r}")
        for E, pk in zip(measurement_operators(s, phases), p):
            rows.append(E.conj().ravel())
            rhs.append(pk)
    A = np.array(rows)
    d = 2**n
    if np.linalg.matrix_rank(A) < d * d:
        raise InvariantViolation("tomography design matrix is singular")
    sol, *_ = np.linalg.lstsq(A, np.array(rhs, dtype=complex), rcond=None)
    rho = sol.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    return project_physical(rho) if project else rho


# ------------------------------------------------------- process tomography


def _as_dm(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return dm(x) if x.ndim == 1 else x


def apply_chi(chi, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return sum(chi[m, n] * PAULIS[m] @ rho @ PAULIS[n].conj().T for m in range(4) for n in range(4))


def _chi_design(inputs) -> np.ndarray:
    blocks = []
    for rho in inputs:
        cols = [(PAULIS[m] @ rho @ PAULIS[n].conj().T).ravel() for m in range(4) for n in range(4)]
        blocks.append(np.array(cols).T)
    return np.vstack(blocks)


def process_tomography(input_states=PROCESS_INPUTS, output_states=(), project: bool = True):
    """Least-squares chi from input/output pairs, then CPTP projection."""
    inputs = [_as_dm(s) for s in input_states]
    outputs = [np.asarray(o, dtype=complex) for o in output_states]
    if len(inputs) != len(outputs):
        raise ConfigurationError("need one output state per input state")
    if np.linalg.matrix_rank(np.array([r.ravel() for r in inputs])) < 4:
        raise ConfigurationError("input states do not span the operator space")
    A = _chi_design(inputs)
    b = np.concatenate([o.ravel() for o in outputs])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    chi = sol.reshape(4, 4)
    chi = 0.5 * (chi + chi.conj().T)
    return project_cptp(chi) if project else chi


def _tp_map() -> np.ndarray:
    # linear map vec(chi) -> vec(sum_mn chi_mn P_n^dag P_m)
    cols = []
    for m in range(4):
        for n in range(4):
            cols.append((PAULIS[n].conj().T @ PAULIS[m]).ravel())
    return np.array(cols).T


_TP = _tp_map()
_TP_PINV = np.linalg.pinv(_TP)


def tp_residual(chi) -> float:
    return float(np.linalg.norm(_TP @ np.asarray(chi).ravel() - I2.ravel()))


def cptp_residual(chi) -> float:
    """max(trace-preservation error, most negative eigenvalue magnitude)."""
    chi = np.asarray(chi)
    neg = max(0.0, -float(np.linalg.eigvalsh(0.5 * (chi + chi.conj().T)).min()))
    return max(tp_residual(chi), neg)


def project_cptp(chi, max_iter: int = 500, tol: float = 1e-10) -> np.ndarray:
    """Alternate projections onto the PSD cone and the trace-preserving set."""
    chi = 0.5 * (np.asarray(chi, dtype=complex) + np.asarray(chi).conj().T)
    for _ in range(max_iter):
        if cptp_residual(chi) < tol:
            break
        w, v = np.linalg.eigh(chi)
        chi = (v * np.clip(w, 0, None)) @ v.conj().T
        x = chi.ravel()
        x = x - _TP_PINV @ (_TP @ x - I2.ravel())
        chi = x.reshape(4, 4)
        chi = 0.5 * (chi + chi.conj().T)
    return chi


# --------------------------------------------------------------- metrics


def fidelity_state(rho, psi) -> float:
    rho = validate_density_matrix(rho)
    psi = np.asarray(psi, dtype=complex)
    return float((psi.conj() @ rho @ psi).real / (psi.conj() @ psi).real)


def fidelity_process(chi, chi_ideal=None) -> float:
    chi = np.asarray(chi, dtype=complex)
    if chi_ideal is None:
        chi_ideal = np.zeros((4, 4), dtype=complex)
        chi_ideal[0, 0] = 1.0
    return float(np.trace(chi @ chi_ideal).real)


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = validate_density_matrix(rho)
    if rho.shape != (4, 4):
        raise ValidationError("concurrence needs a 4x4 density matrix")
    yy = np.kron(Y, Y)
    tilde = yy @ rho.conj() @ yy
    w, v = np.linalg.eigh(rho)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(sq @ tilde @ sq), 0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1:].sum()))


# ------------------------------------------------------ phase calibration


def golden_maximize(f: Callable[[float], float], a: float, b: float, tol: float = 1e-7):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def maximize_angle(f: Callable[[float], float], n_scan: int = 360, tol: float = 1e-7):
    """Global maximum of a 2 pi-periodic function: grid scan then golden section.

    Returns ``(angle, value, flat)``; ``flat`` is True when the scan saw no
    variation, in which case the angle is 0.
    """
    grid = np.linspace(0.0, 2 * math.pi, n_scan, endpoint=False)
    vals = np.array([f(x) for x in grid])
    if vals.max() - vals.min() < 1e-12:
        return 0.0, float(vals[0]), True
    k = int(np.argmax(vals))
    step = grid[1] - grid[0]
    x, v = golden_maximize(f, grid[k] - step, grid[k] + step, tol)
    x = math.remainder(x, 2 * math.pi)
    return x, v, False


def rotate_qubit_phase(rho, phi: float, qubit: int = 1) -> np.ndarray:
    """Apply a z phase e^{i phi} on |e> of one qubit of a two-qubit state."""
    ops = [I2, I2]
    ops[qubit] = phase_gate(phi)
    U = np.kron(*ops)
    return U @ rho @ U.conj().T


def dynamical_phase_calibration(rho, target="triplet", qubit: int = 1):
    """Angle phi such that ``rho`` is closest to P(phi) |target> with P a z phase on ``qubit``.

    Undo it with ``rotate_qubit_phase(rho, -phi)``. Returns ``(phi, degenerate)``.
    """
    rho = validate_density_matrix(rho)
    psi = {"triplet": BELL_TRIPLET, "singlet": BELL_SINGLET}.get(target, target)
    psi = np.asarray(psi, dtype=complex)
    phi, _, flat = maximize_angle(
        lambda a: float((psi.conj() @ rotate_qubit_phase(rho, -a, qubit) @ psi).real)
    )
    return phi, flat


def calibrate_output_phase(inputs, outputs):
    """Z phase on the output qubit that maximises the identity-process fidelity."""
    inputs = [_as_dm(s) for s in inputs]

    def score(a):
        P = phase_gate(-a)
        rotated = [P @ o @ P.conj().T for o in outputs]
        return fidelity_process(process_tomography(inputs, rotated, project=False))

    phi, _, _ = maximize_angle(score, n_scan=72)
    return phi


# ------------------------------------------------------------ serialisation


def matrix_to_json(m, basis: Sequence[str]) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "basis": list(basis),
        "data": [[[float(z.real), float(z.imag)] for z in row] for row in m],
    }


def matrix_from_json(obj: Mapping) -> tuple[np.ndarray, list[str]]:
    data = np.array(obj["data"], dtype=float)
    return data[..., 0] + 1j * data[..., 1], list(obj["basis"])
