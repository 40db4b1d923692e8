"""Equatorial two-qubit measurements, readout error and the CHSH correlation.

Outcome ordering is gg, ge, eg, ee (Q1 first). Measuring along the equatorial
axis at angle phi reports ``g`` for the +1 eigenstate of cos(phi) X + sin(phi) Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import qinfo

PAIRS = (("a", "b"), ("a", "b'"), ("a'", "b"), ("a'", "b'"))
SIGNS = {("a", "b"): 1.0, ("a", "b'"): -1.0, ("a'", "b"): 1.0, ("a'", "b'"): 1.0}
PARITY = np.array([1.0, -1.0, -1.0, 1.0])
DEFAULT_SHOTS = 10_000
DEFAULT_THETA_POINTS = 100
BOOTSTRAP_RESAMPLES = 1000


class ConfigurationError(ValueError):
    pass


class CorrectionError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic assignment matrix: row = true state, column = reported outcome."""

    F_g: float = 1.0
    F_e: float = 1.0

    def __post_init__(self):
        if not (0 <= self.F_g <= 1 and 0 <= self.F_e <= 1):
            raise ConfigurationError("readout fidelities must lie in [0, 1]")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.F_g, 1 - self.F_g], [1 - self.F_e, self.F_e]])

    @property
    def invertible(self) -> bool:
        return self.F_g + self.F_e > 1

    @property
    def visibility(self) -> float:
        return self.F_g + self.F_e - 1


def joint_confusion(confusion: Sequence[ConfusionMatrix]) -> np.ndarray:
    c1, c2 = confusion
    return np.kron(c1.matrix, c2.matrix)


def apply_readout(p, confusion: Sequence[ConfusionMatrix]) -> np.ndarray:
    """Reported-outcome distribution for true distribution ``p``."""
    return joint_confusion(confusion).T @ np.asarray(p, dtype=float)


def correct_readout(measured, confusion: Sequence[ConfusionMatrix], clip: bool = True):
    """Invert the assignment matrices; returns ``(p, clipped)``."""
    if not all(c.invertible for c in confusion):
        raise CorrectionError("confusion matrix is not invertible (need F_g + F_e > 1)")
    p = np.linalg.solve(joint_confusion(confusion).T, np.asarray(measured, dtype=float))
    clipped = bool(np.any(p < 0) or np.any(p > 1))
    if clip and clipped:
        p = np.clip(p, 0.0, 1.0)
        p = p / p.sum()
    return p, clipped


# ----------------------------------------------------------- measurements


def _axis_angle(axis) -> float:
    a = np.asarray(axis, dtype=float)
    if a.ndim == 0:
        return float(a)
    if a.shape != (3,) or abs(np.linalg.norm(a) - 1) > 1e-9 or abs(a[2]) > 1e-9:
        raise ConfigurationError(f"axis {axis!r} is not a unit vector on the equator")
    return math.atan2(a[1], a[0])


def rz(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def pre_rotation(phi: float) -> np.ndarray:
    """Single-qubit rotation taking the +1 eigenstate of sigma_phi to |g>."""
    return ry(-math.pi / 2) @ rz(-phi)


def outcome_probabilities(rho, q1_axis, q2_axis) -> np.ndarray:
    rho = qinfo.validate_density_matrix(rho)
    U = np.kron(pre_rotation(_axis_angle(q1_axis)), pre_rotation(_axis_angle(q2_axis)))
    p = np.diag(U @ rho @ U.conj().T).real
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def correlator(p) -> float:
    return float(PARITY @ np.asarray(p, dtype=float))


def chsh_axes(theta: float) -> dict:
    return {
        ("a", "b"): (0.0, theta),
        ("a", "b'"): (0.0, theta + math.pi / 2),
        ("a'", "b"): (math.pi / 2, theta),
        ("a'", "b'"): (math.pi / 2, theta + math.pi / 2),
    }


def chsh_probabilities(rho, theta: float, confusion=None) -> dict:
    out = {}
    for pair, (a1, a2) in chsh_axes(theta).items():
        p = outcome_probabilities(rho, a1, a2)
        out[pair] = apply_readout(p, confusion) if confusion is not None else p
    return out


def chsh_from_probabilities(probs: Mapping) -> float:
    missing = [p for p in PAIRS if p not in probs]
    if missing:
        raise ConfigurationError(f"missing axis pairs {missing}")
    return sum(SIGNS[p] * correlator(probs[p]) for p in PAIRS)


def chsh_S(rho, theta: float, confusion=None) -> float:
    """Exact S(theta) = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    return chsh_from_probabilities(chsh_probabilities(rho, theta, confusion))


# ------------------------------------------------------------------ shots


@dataclass
class ShotTable:
    """Counts (gg, ge, eg, ee) per axis pair."""

    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for pair, c in self.counts.items():
            c = np.asarray(c, dtype=np.int64)
            if c.shape != (4,) or c.sum() <= 0 or np.any(c < 0):
                raise ConfigurationError(f"bad counts for {pair}")
            self.counts[pair] = c

    def frequencies(self) -> dict:
        return {k: v / v.sum() for k, v in self.counts.items()}

    def total(self, pair) -> int:
        return int(self.counts[pair].sum())


def sample_shots(p, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    if n_shots <= 0:
        raise ConfigurationError("n_shots must be > 0")
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    return rng.multinomial(n_shots, p / p.sum())


def sample_chsh(rho, theta: float, confusion=None, n_shots: int = DEFAULT_SHOTS, seed=0) -> ShotTable:
    """Shots for the four axis pairs from one seeded generator (PCG64)."""
    rng = np.random.default_rng(seed)
    probs = chsh_probabilities(rho, theta, confusion)
    return ShotTable({pair: sample_shots(probs[pair], n_shots, rng) for pair in PAIRS})


def _weights(confusion) -> np.ndarray:
    # corrected correlator = w . p_measured
    if confusion is None:
        return PARITY
    return np.linalg.solve(joint_confusion(confusion), PARITY)


def chsh_from_shots(shots: ShotTable, confusion=None) -> tuple[float, bool]:
    """Estimated S, readout-corrected when ``confusion`` is given; returns ``(S, clipped)``."""
    freqs = shots.frequencies()
    if confusion is None:
        return chsh_from_probabilities(freqs), False
    corrected, flags = {}, []
    for pair, f in freqs.items():
        corrected[pair], c = correct_readout(f, confusion)
        flags.append(c)
    return chsh_from_probabilities(corrected), any(flags)


def analytic_sigma(probs: Mapping, n_shots: Mapping | int, confusion=None) -> float:
    """Shot-noise standard deviation of S treating it as a linear functional of multinomial frequencies."""
    w = _weights(confusion)
    var = 0.0
    for pair in PAIRS:
        p = np.asarray(probs[pair], dtype=float)
        n = n_shots if isinstance(n_shots, int) else n_shots[pair]
        var += (w**2 @ p - (w @ p) ** 2) / n
    return math.sqrt(max(var, 0.0))


def chsh_error_bar(shots: ShotTable, confusion=None, n_boot: int = BOOTSTRAP_RESAMPLES, seed=0):
    """``(sigma_analytic, sigma_bootstrap)`` for S estimated from ``shots``."""
    freqs = shots.frequencies()
    n = {pair: shots.total(pair) for pair in PAIRS}
    sig = analytic_sigma(freqs, n, confusion)
    rng = np.random.default_rng(seed)
    w = _weights(confusion)
    boot = np.zeros(n_boot)
    for pair in PAIRS:
        draws = rng.multinomial(n[pair], freqs[pair], size=n_boot) / n[pair]
        boot += SIGNS[pair] * (draws @ w)
    return sig, float(np.std(boot, ddof=1))


# ---------------------------------------------------------------- sweeps


@dataclass
class ChshSweep:
    theta: np.ndarray
    S_raw: np.ndarray
    S_corrected: np.ndarray
    sigma_raw: np.ndarray
    sigma_corrected: np.ndarray
    clipped: np.ndarray

    def argmax(self, which: str = "raw") -> tuple[float, float]:
        y = self.S_raw if which == "raw" else self.S_corrected
        return parabolic_peak(self.theta, y)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.theta, self.S_raw, self.S_corrected, self.sigma_raw, self.sigma_corrected])
        header = "theta_rad,S_raw,S_corrected,sigma_S_raw,sigma_S_corrected"
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12e")


def parabolic_peak(x, y) -> tuple[float, float]:
    """Vertex of the parabola through the largest sample of a periodic uniform grid and its neighbours."""
    x, y = np.asarray(x), np.asarray(y)
    k = int(np.argmax(y))
    y0, y1, y2 = y[k - 1], y[k], y[(k + 1) % y.size]
    h = x[1] - x[0]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(x[k]), float(y1)
    off = 0.5 * (y0 - y2) / denom
    return float((x[k] + off * h) % (2 * math.pi)), float(y1 - 0.25 * (y0 - y2) * off)


def theta_grid(n: int = DEFAULT_THETA_POINTS) -> np.ndarray:
    return np.linspace(0.0, 2 * math.pi, n, endpoint=False)


def chsh_sweep(
    rho,
    confusion: Sequence[ConfusionMatrix],
    thetas=None,
    n_shots: int = DEFAULT_SHOTS,
    sampled: bool = False,
    seed: int = 0,
) -> ChshSweep:
    """S(theta) raw and readout-corrected.

    Exact by default, with error bars for ``n_shots`` per axis pair. With
    ``sampled`` each theta point draws its own shots from ``(seed, index)``.
    """
    thetas = theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        raise ConfigurationError("empty theta grid")
    raw, cor, sr, sc, flags = [], [], [], [], []
    for i, th in enumerate(thetas):
        probs = chsh_probabilities(rho, th, confusion)
        if sampled:
            shots = sample_chsh(rho, th, confusion, n_shots, seed=[seed, i])
            freqs = shots.frequencies()
            raw.append(chsh_from_shots(shots)[0])
            s, clip = chsh_from_shots(shots, confusion)
            cor.append(s)
            flags.append(clip)
            probs = freqs
        else:
            raw.append(chsh_from_probabilities(probs))
            cor.append(chsh_S(rho, th))
            flags.append(False)
        sr.append(analytic_sigma(probs, n_shots))
        sc.append(analytic_sigma(probs, n_shots, confusion))
    return ChshSweep(thetas, np.array(raw), np.array(cor), np.array(sr), np.array(sc), np.array(flags))


def confusion_from_device(device) -> tuple[ConfusionMatrix, ConfusionMatrix]:
    return tuple(ConfusionMatrix(q.F_g, q.F_e) for q in device.qubits)
