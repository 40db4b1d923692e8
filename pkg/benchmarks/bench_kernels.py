"""Time the delay integrator under both backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each case runs once untimed so numba compilation is excluded, then the best
of ``--repeat`` runs is reported with the max difference between backends.
"""

import argparse
import time

import numpy as np

from remotebell import kernels
from remotebell._accel import NUMBA_ENABLED
from remotebell.coupler import CouplerWaveform
from remotebell.device import load_device
from remotebell.itinerant import half_step_grid, sample_control


def delay_case():
    dev = load_device()
    dt = 0.005e-9
    wf = CouplerWaveform(3e-9, [(0.0, 11.5e-9)])
    t = half_step_grid(wf.span[0], 40e-9, dt)
    c1, c2 = sample_control(wf, dev, 0, t), sample_control(wf, dev, 1, t)
    kap, det = np.array([c1.kappa, c2.kappa]), np.zeros((2, t.size))
    steps = int(round(dev.travel_time / dt))
    return lambda backend: kernels.delay_rk4(kap, det, [1.0, 0.0], [1, 0], [steps, steps], dt, backend)[0]


def abrupt_case():
    dev = load_device()
    dt = 0.0025e-9
    wf = CouplerWaveform(0.0, [(0.0, 200e-9)])
    t = half_step_grid(0.0, 100e-9, dt)
    kap = sample_control(wf, dev, 0, t).kappa[None, :]
    steps = int(round(2 * dev.travel_time / dt))
    return lambda backend: kernels.delay_rk4(kap, 0 * kap, [1.0], [0], [steps], dt, backend)[0]


def best_time(f, repeat):
    f()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        f()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if not NUMBA_ENABLED:
        print("numba disabled (REMOTEBELL_DISABLE_NUMBA set or numba missing); numpy timings only")
    backends = ["numpy"] + (["numba"] if NUMBA_ENABLED else [])
    extra = f"{'speedup':>10}{'max diff':>12}" if NUMBA_ENABLED else ""
    print(f"{'case':<14}" + "".join(f"{b:>12}" for b in backends) + extra)
    for name, make in [("transfer", delay_case), ("ping-pong", abrupt_case)]:
        f = make()
        t = {b: best_time(lambda: f(b), args.repeat) for b in backends}
        row = f"{name:<14}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if "numba" in t:
            diff = float(np.max(np.abs(f("numba") - f("numpy"))))
            row += f"{t['numpy'] / t['numba']:>9.1f}x{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
