"""Coupler control: programmed waveform -> junction phase -> g(t), kappa(t), detuning(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .device import (
    CouplerParams,
    ModeSpec,
    QubitParams,
    coupling_g,
    decay_rate_kappa,
    qubit_frequency_shift,
)
from .kernels import SolverError, bisect_phase

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
KERNEL_HALF_WIDTH_SIGMAS = 5.0
DEFAULT_SAMPLE_DT = 0.005e-9


def delta_off(c: CouplerParams) -> float:
    """External phase bias at which the junction sits at pi/2 (coupling off)."""
    return 0.5 * math.pi + (2.0 * c.L_g + c.L_w) / c.L_T


def external_phase(delta, c: CouplerParams):
    """Forward map delta -> delta_ext."""
    return np.asarray(delta) + c.screening * np.sin(delta)


def solve_junction_phase(delta_ext, c: CouplerParams):
    """Invert delta_ext = delta + r sin(delta) on the branch through [pi/2, pi].

    For r < 1 the forward map is strictly increasing, so bisection on the
    bracket [x - r, x + r] finds the only root.
    """
    r = c.screening
    x = np.asarray(delta_ext, dtype=float)
    scalar = x.ndim == 0
    flat = np.atleast_1d(x).ravel()
    if r >= 1.0:
        # non-monotone coupler: only the [pi/2, pi] branch is meaningful
        lo, hi = 0.5 * math.pi + r, math.pi
        if np.any((flat < min(lo, hi) - 1e-12) | (flat > max(lo, hi) + 1e-12)):
            raise SolverError(f"screening ratio {r:.3f} >= 1 and delta_ext outside branch")
    out = bisect_phase(flat, r)
    # exact off point so that g vanishes identically there
    out[flat == delta_off(c)] = 0.5 * math.pi
    out = out.reshape(np.shape(x))
    return float(out) if scalar else out


@dataclass
class CouplerWaveform:
    """Rectangle train filtered by a Gaussian of the given FWHM.

    Times are in seconds, ``segments`` is a list of (start, duration) pairs,
    and ``amplitude_on`` is the external phase reached on a long plateau.
    """

    w_fwhm: float
    segments: list[tuple[float, float]] = field(default_factory=list)
    amplitude_on: float = math.pi
    delta_off: float | None = None
    sample_dt: float = DEFAULT_SAMPLE_DT

    def __post_init__(self):
        if self.w_fwhm < 0:
            raise ValueError("w_fwhm must be >= 0")
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be > 0")
        segs = [(float(s), float(d)) for s, d in self.segments]
        for s, d in segs:
            if d < 0:
                raise ValueError("segment durations must be >= 0")
        for (s0, d0), (s1, _) in zip(segs, segs[1:]):
            if s1 < s0 + d0:
                raise ValueError("segments must be time-ordered and non-overlapping")
        self.segments = segs

    @property
    def sigma(self) -> float:
        return self.w_fwhm / FWHM_PER_SIGMA

    @property
    def span(self) -> tuple[float, float]:
        """Interval outside of which the filtered waveform is exactly off."""
        if not self.segments:
            return 0.0, 0.0
        pad = KERNEL_HALF_WIDTH_SIGMAS * self.sigma
        return self.segments[0][0] - pad, self.segments[-1][0] + self.segments[-1][1] + pad

    def default_times(self) -> np.ndarray:
        t0, t1 = self.span
        n = int(math.ceil((t1 - t0) / self.sample_dt)) + 1
        return t0 + self.sample_dt * np.arange(n)

    def filtered(self, times, left: bool = False) -> np.ndarray:
        """(G * sum Rect)(t) on a uniform grid, normalised to plateau at 1.

        ``left`` returns left limits, which differ only for abrupt switching.
        """
        t = np.asarray(times, dtype=float)
        if t.size == 0:
            return t.copy()
        h = t[1] - t[0] if t.size > 1 else self.sample_dt
        if self.w_fwhm == 0:
            # abrupt switching: right-continuous steps that land on grid points
            rect = np.zeros_like(t)
            eps = -1e-9 * h if left else 1e-9 * h
            for start, dur in self.segments:
                rect += (t >= start - eps) & (t < start + dur - eps)
            return rect
        # cell-averaged rectangles keep the result continuous in start and width
        rect = np.zeros_like(t)
        lo_edge, hi_edge = t - 0.5 * h, t + 0.5 * h
        for start, dur in self.segments:
            overlap = np.clip(np.minimum(hi_edge, start + dur) - np.maximum(lo_edge, start), 0, None)
            rect += overlap / h
        if self.sigma < 0.5 * h:
            return rect
        half = int(math.ceil(KERNEL_HALF_WIDTH_SIGMAS * self.sigma / h))
        u = h * np.arange(-half, half + 1)
        kern = np.exp(-0.5 * (u / self.sigma) ** 2)
        kern /= kern.sum()
        return _conv_same(rect, kern)


def _conv_same(x, k):
    full = np.convolve(x, k, mode="full")
    start = (k.size - 1) // 2
    return full[start : start + x.size]


def shape_waveform(w: CouplerWaveform, c: CouplerParams | None = None, times=None, left=False):
    """Sampled external phase delta_ext(t); returns ``(times, delta_ext)``."""
    t = w.default_times() if times is None else np.asarray(times, dtype=float)
    d_off = w.delta_off if w.delta_off is not None else (delta_off(c) if c is not None else None)
    if d_off is None:
        raise ValueError("delta_off unknown: give it on the waveform or pass coupler params")
    shape = w.filtered(t, left)
    return t, np.where(shape == 0.0, d_off, (w.amplitude_on - d_off) * shape + d_off)


@dataclass
class ControlTrace:
    times: np.ndarray
    delta_ext: np.ndarray
    delta: np.ndarray
    g: np.ndarray
    kappa: np.ndarray
    delta_omega_q: np.ndarray
    kappa_left: np.ndarray | None = None  # set only when the coupling switches abruptly


def control_trace(
    w: CouplerWaveform,
    q: QubitParams,
    m: ModeSpec,
    c: CouplerParams,
    compensated: bool = True,
    times=None,
) -> ControlTrace:
    """Per-sample pipeline delta_ext -> delta -> g -> (kappa, qubit shift)."""
    t, d_ext = shape_waveform(w, c, times)
    delta = solve_junction_phase(d_ext, c)
    g = np.asarray(coupling_g(q, m, c, delta), dtype=float)
    kappa = np.asarray(decay_rate_kappa(g, m.omega_fsr), dtype=float)
    kappa_left = None
    if w.w_fwhm == 0:
        _, d_left = shape_waveform(w, c, t, left=True)
        g_left = coupling_g(q, m, c, solve_junction_phase(d_left, c))
        kappa_left = np.asarray(decay_rate_kappa(np.asarray(g_left, dtype=float), m.omega_fsr), dtype=float)
    if compensated:
        shift = np.zeros_like(g)
    else:
        shift = np.asarray(qubit_frequency_shift(q, m, c, g), dtype=float)
    return ControlTrace(t, d_ext, np.asarray(delta), g, kappa, shift, kappa_left)


def waveform_from_dict(d: dict, sample_dt: float = DEFAULT_SAMPLE_DT) -> tuple[CouplerWaveform, bool]:
    """``{w_fwhm_ns, segments: [{start_ns, width_ns}], amplitude, compensated}`` -> (waveform, compensated).

    ``amplitude`` is the plateau external phase in units of pi.
    """
    segs = [(s["start_ns"] * 1e-9, s["width_ns"] * 1e-9) for s in d.get("segments", [])]
    w = CouplerWaveform(
        w_fwhm=d.get("w_fwhm_ns", 0.0) * 1e-9,
        segments=segs,
        amplitude_on=d.get("amplitude", 1.0) * math.pi,
        sample_dt=sample_dt,
    )
    return w, bool(d.get("compensated", True))
