"""Hot numerical loops.

The delay integrator steps node by node and has a numba and a pure-numpy
implementation; the wrapper picks the compiled one unless
``REMOTEBELL_DISABLE_NUMBA`` is set. Both agree to rounding. The linear RK4
propagator and the phase bisection vectorise well and are numpy only.
"""

from __future__ import annotations

import numpy as np

from ._accel import NUMBA_ENABLED, njit


class SolverError(ArithmeticError):
    """Root finding did not reach the requested residual."""


# --------------------------------------------------------------- RK4, linear


def rk4_linear(L, v0, dt, nsteps, record_every=1):
    """Fixed-step RK4 for dv/dt = L v.

    With L constant, one RK4 step is multiplication by a fourth-order
    polynomial in dt*L, so the step matrix is built once and powered up to the
    recording stride. Returns the final vector and the states at every
    ``record_every`` steps, starting with ``v0``.
    """
    L = np.asarray(L, dtype=np.complex128)
    nsteps, record_every = int(nsteps), max(1, int(record_every))
    A = dt * L
    A2 = A @ A
    A3 = A2 @ A
    step = np.eye(L.shape[0], dtype=complex) + A + A2 / 2 + A3 / 6 + (A3 @ A) / 24
    block = np.linalg.matrix_power(step, record_every)
    nrec = nsteps // record_every
    records = np.empty((nrec + 1, v0.shape[0]), dtype=complex)
    v = v0.astype(complex)
    records[0] = v
    for r in range(1, nrec + 1):
        v = block @ v
        records[r] = v
    rest = nsteps - nrec * record_every
    if rest:
        v = np.linalg.matrix_power(step, rest) @ v
    return v, records


# ------------------------------------------------------ junction-phase roots


def _bisect(x, r, tol, maxiter):
    lo = x - abs(r)
    hi = x + abs(r)
    it = 0
    while it < maxiter and np.max(hi - lo, initial=0.0) > tol:
        mid = 0.5 * (lo + hi)
        below = mid + r * np.sin(mid) - x < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        it += 1
    return 0.5 * (lo + hi), it


def bisect_phase(x, r, tol=1e-13, maxiter=200, residual_tol=1e-12):
    """Solve ``x = d + r sin d`` for d by bisection.

    Every root lies in [x - |r|, x + |r|], and for |r| < 1 it is unique.
    """
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    d, iters = _bisect(x, float(r), float(tol), int(maxiter))
    resid = np.abs(d + r * np.sin(d) - x)
    if resid.size and resid.max() > residual_tol:
        k = int(np.argmax(resid))
        raise SolverError(
            f"junction phase did not converge after {iters} iterations: "
            f"x={x[k]!r}, bracket=[{x[k] - abs(r)!r}, {x[k] + abs(r)!r}], residual={resid[k]:.3e}"
        )
    return d


# ------------------------------------------------- delay-coupled emitters


@njit
def _midpoint(out_r, out_l, s, j):
    """Field at the centre of [j, j+1] from the history of source ``s``.

    Four-point cubic where the history is smooth. The stencil never crosses
    a node whose left and right limits differ, and reads each outer point
    from the side facing the interval.
    """
    if j < 0:
        return 0j
    a0 = out_r[s, j]
    a1 = out_l[s, j + 1]
    left_ok = j >= 1 and out_l[s, j] == out_r[s, j]
    right_ok = out_l[s, j + 1] == out_r[s, j + 1]
    if left_ok and right_ok:
        return (9.0 * (a0 + a1) - out_r[s, j - 1] - out_l[s, j + 2]) / 16.0
    if right_ok:
        return (3.0 * a0 + 6.0 * a1 - out_l[s, j + 2]) / 8.0
    if left_ok:
        return (-out_r[s, j - 1] + 6.0 * a0 + 3.0 * a1) / 8.0
    return 0.5 * (a0 + a1)


@njit
def _delay_rk4_numba(kappa_h, kappa_lh, detune_h, sigma0, src, dsteps, dt):
    n_em = kappa_h.shape[0]
    n = (kappa_h.shape[1] + 1) // 2
    sigma = np.zeros((n_em, n), dtype=np.complex128)
    out_r = np.zeros((n_em, n), dtype=np.complex128)
    out_l = np.zeros((n_em, n), dtype=np.complex128)
    a_in = np.zeros((n_em, n), dtype=np.complex128)
    for e in range(n_em):
        sigma[e, 0] = sigma0[e]
        out_r[e, 0] = np.sqrt(kappa_h[e, 0]) * sigma0[e]
    for i in range(n - 1):
        for e in range(n_em):
            s = src[e]
            j = i - dsteps[e]
            a0 = out_r[s, j] if j >= 0 else 0j
            a1r = out_r[s, j + 1] if j + 1 >= 0 else 0j
            a1l = out_l[s, j + 1] if j + 1 >= 0 else 0j
            am = _midpoint(out_r, out_l, s, j)
            k0 = kappa_h[e, 2 * i]
            km = kappa_h[e, 2 * i + 1]
            k1_ = kappa_lh[e, 2 * i + 2]
            w0 = detune_h[e, 2 * i]
            wm = detune_h[e, 2 * i + 1]
            w1 = detune_h[e, 2 * i + 2]
            x = sigma[e, i]
            f1 = (-1j * w0 - 0.5 * k0) * x + np.sqrt(k0) * a0
            y = x + 0.5 * dt * f1
            f2 = (-1j * wm - 0.5 * km) * y + np.sqrt(km) * am
            y = x + 0.5 * dt * f2
            f3 = (-1j * wm - 0.5 * km) * y + np.sqrt(km) * am
            y = x + dt * f3
            f4 = (-1j * w1 - 0.5 * k1_) * y + np.sqrt(k1_) * a1l
            sigma[e, i + 1] = x + dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
            a_in[e, i + 1] = a1r
        for e in range(n_em):
            s = src[e]
            j1 = i + 1 - dsteps[e]
            a1l = out_l[s, j1] if j1 >= 0 else 0j
            out_r[e, i + 1] = np.sqrt(kappa_h[e, 2 * i + 2]) * sigma[e, i + 1] - a_in[e, i + 1]
            out_l[e, i + 1] = np.sqrt(kappa_lh[e, 2 * i + 2]) * sigma[e, i + 1] - a1l
    return sigma, out_r, a_in, out_l


def _delay_rk4_numpy(kappa_h, kappa_lh, detune_h, sigma0, src, dsteps, dt):
    n_em = kappa_h.shape[0]
    n = (kappa_h.shape[1] + 1) // 2
    sigma = np.zeros((n_em, n), dtype=complex)
    a_in = np.zeros((n_em, n), dtype=complex)
    sqk = np.sqrt(kappa_h)
    sqk_l = np.sqrt(kappa_lh)
    gen = -1j * detune_h - 0.5 * kappa_h
    gen_l = -1j * detune_h - 0.5 * kappa_lh
    sigma[:, 0] = sigma0
    # padded histories: column pad + j holds node j, negative nodes read vacuum
    pad = int(dsteps.max()) + 2
    out_r = np.zeros((n_em, n + pad), dtype=complex)
    out_l = np.zeros((n_em, n + pad), dtype=complex)
    out_r[:, pad] = sqk[:, 0] * sigma0
    rows = np.asarray(src)
    for i in range(n - 1):
        j = pad + i - dsteps
        a0 = out_r[rows, j]
        a1r = out_r[rows, j + 1]
        a1l = out_l[rows, j + 1]
        am1 = out_r[rows, j - 1]
        a2 = out_l[rows, j + 2]
        left_ok = (j - pad >= 1) & (out_l[rows, j] == a0)
        right_ok = a1l == a1r
        am = np.where(
            left_ok & right_ok,
            (9.0 * (a0 + a1l) - am1 - a2) / 16.0,
            np.where(
                right_ok,
                (3.0 * a0 + 6.0 * a1l - a2) / 8.0,
                np.where(left_ok, (-am1 + 6.0 * a0 + 3.0 * a1l) / 8.0, 0.5 * (a0 + a1l)),
            ),
        )
        am = np.where(j - pad < 0, 0j, am)
        x = sigma[:, i]
        f1 = gen[:, 2 * i] * x + sqk[:, 2 * i] * a0
        f2 = gen[:, 2 * i + 1] * (x + 0.5 * dt * f1) + sqk[:, 2 * i + 1] * am
        f3 = gen[:, 2 * i + 1] * (x + 0.5 * dt * f2) + sqk[:, 2 * i + 1] * am
        f4 = gen_l[:, 2 * i + 2] * (x + dt * f3) + sqk_l[:, 2 * i + 2] * a1l
        sigma[:, i + 1] = x + dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        a_in[:, i + 1] = a1r
        out_r[:, pad + i + 1] = sqk[:, 2 * i + 2] * sigma[:, i + 1] - a1r
        out_l[:, pad + i + 1] = sqk_l[:, 2 * i + 2] * sigma[:, i + 1] - a1l
    return sigma, out_r[:, pad:], a_in, out_l[:, pad:]


def delay_rk4(kappa_h, detune_h, sigma0, src, delay_steps, dt, backend=None, kappa_left_h=None):
    """Integrate single-excitation emitters coupled through delayed fields.

    ``kappa_h`` and ``detune_h`` are sampled on the half-step grid (2n-1 points
    for n integration nodes). Emitter ``e`` receives the output of emitter
    ``src[e]`` delayed by ``delay_steps[e]`` whole steps; half-step history is
    reconstructed by four-point cubic interpolation. History before the first
    node is vacuum. ``kappa_left_h`` gives left limits of kappa where the
    coupling switches abruptly on a node; it defaults to ``kappa_h``.

    Returns ``(sigma, a_out, a_in, a_out_left)``. ``a_out`` and ``a_in`` are
    right limits at each node; ``a_out_left`` holds left limits, which differ
    only where abrupt switching or an arriving wavefront makes the field jump.
    """
    kappa_h = np.ascontiguousarray(np.atleast_2d(kappa_h), dtype=np.float64)
    if kappa_left_h is None:
        kappa_lh = kappa_h
    else:
        kappa_lh = np.ascontiguousarray(np.atleast_2d(kappa_left_h), dtype=np.float64)
    detune_h = np.ascontiguousarray(np.atleast_2d(detune_h), dtype=np.float64)
    sigma0 = np.ascontiguousarray(np.atleast_1d(sigma0), dtype=np.complex128)
    src = np.ascontiguousarray(np.atleast_1d(src), dtype=np.int64)
    dsteps = np.ascontiguousarray(np.atleast_1d(delay_steps), dtype=np.int64)
    if kappa_h.shape != detune_h.shape or kappa_h.shape[1] % 2 != 1:
        raise ValueError("control arrays must share an odd-length half-step grid")
    if kappa_lh.shape != kappa_h.shape:
        raise ValueError("kappa left limits must match the kappa grid")
    if np.any(kappa_h < 0) or np.any(kappa_lh < 0):
        raise ValueError("kappa must be non-negative")
    if np.any(dsteps < 2):
        raise ValueError("delays must span at least two integration steps")
    if _use_numba(backend):
        return _delay_rk4_numba(kappa_h, kappa_lh, detune_h, sigma0, src, dsteps, float(dt))
    return _delay_rk4_numpy(kappa_h, kappa_lh, detune_h, sigma0, src, dsteps, float(dt))


def _use_numba(backend):
    if backend is None:
        return NUMBA_ENABLED
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba"
