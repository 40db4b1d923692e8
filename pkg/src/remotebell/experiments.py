"""Named experiment pipelines behind the command line.

Each experiment takes the device, a flat parameter dict (times in ns,
frequencies in MHz) and a seed, and returns an :class:`Outcome` holding scalar
metrics plus files to write.
"""

from __future__ import annotations

import copy
import functools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import bell, itinerant, qinfo, relay
from .coupler import solve_junction_phase, waveform_from_dict
from .device import (
    DeviceParams,
    coupling_g,
    decay_rate_kappa,
    device_from_dict,
    g_max,
    qubit_frequency_shift,
)

NS, MHZ = 1e-9, 2 * math.pi * 1e6


class ExperimentError(ValueError):
    """Unknown experiment or malformed configuration."""


@dataclass
class Outcome:
    metrics: dict[str, float] = field(default_factory=dict)
    writers: dict[str, Callable[[str], None]] = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    func: Callable[[DeviceParams, dict, Any], Outcome]
    defaults: dict
    figure: str


REGISTRY: dict[str, Experiment] = {}


def experiment(name: str, figure: str, **defaults):
    def wrap(func):
        REGISTRY[name] = Experiment(name, func, defaults, figure)
        return func

    return wrap


# ---------------------------------------------------------------- helpers


def _json_writer(obj):
    def write(path):
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)
            fh.write("\n")

    return write


def _csv_writer(header: list[str], columns):
    data = np.column_stack(columns)

    def write(path):
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.12e")

    return write


def _device_key(device: DeviceParams) -> str:
    return repr(device)


_DEVICES: dict[str, DeviceParams] = {}


def _cached_device(device: DeviceParams) -> str:
    key = _device_key(device)
    _DEVICES[key] = device
    return key


@functools.lru_cache(maxsize=32)
def _itinerant_bell_cached(key: str, t_transfer_ns, w_fwhm_ns: float, dt_ns: float, sqrt2: bool):
    device = _DEVICES[key]
    t = None if t_transfer_ns is None else t_transfer_ns * NS
    return itinerant.half_photon_bell(
        device, t, w_fwhm_ns * NS, dt_ns * NS, itinerant.SQRT2 if sqrt2 else 1.0
    )


@functools.lru_cache(maxsize=32)
def _relay_cached(key: str, n_modes, g_MHz, swap_ns, half_ns, dt_ns, sqrt2, single_g, mode_loss):
    device = _DEVICES[key]
    sys = relay.MultimodeSystem.from_device(device, n_modes, g_MHz * MHZ, single_g, mode_loss=mode_loss)
    return sys, relay.relay_metrics(sys, swap_ns * NS, half_ns * NS, sqrt2, dt=dt_ns * NS)


def itinerant_bell_state(device, p):
    return _itinerant_bell_cached(
        _cached_device(device), p.get("t_transfer_ns"), p["w_fwhm_ns"], p["dt_ns"], p["sqrt2_dephasing"]
    )


def relay_state(device, p):
    return _relay_cached(
        _cached_device(device),
        p["n_modes"],
        p["g_MHz"],
        p["swap_ns"],
        p["half_ns"],
        p["dt_ns"],
        p["sqrt2_dephasing"],
        p["single_g"],
        p["mode_loss"],
    )


RELAY_DEFAULTS = dict(
    n_modes=5, g_MHz=5.0, swap_ns=50.0, half_ns=25.0, dt_ns=0.01, sqrt2_dephasing=True, single_g=False,
    mode_loss=False,
)
ITINERANT_DEFAULTS = dict(w_fwhm_ns=3.0, dt_ns=0.005, sqrt2_dephasing=True, t_transfer_ns=None)


# ---------------------------------------------------------- weak coupling


@experiment("spectroscopy-weak", "qubit-multimode spectroscopy at g/2pi = 5 MHz",
            n_modes=6, g_MHz=5.0, span_fsr=3.5, points=701)
def spectroscopy_weak(device, p, seed):
    sys = relay.MultimodeSystem.from_device(device, p["n_modes"], (p["g_MHz"] * MHZ, 0.0), single_g=True)
    half = p["span_fsr"] * device.omega_fsr
    det = np.linspace(-half, half, p["points"])
    ev = relay.hamiltonian_eigenfrequencies(sys, det, qubit=0)
    # gap between the two levels that anticross at each mode
    gaps = []
    for off in sys.mode_offsets():
        ev_at = relay.hamiltonian_eigenfrequencies(sys, [off], qubit=0)[0]
        k = np.argsort(np.abs(ev_at - off))[:2]
        gaps.append(abs(ev_at[k[0]] - ev_at[k[1]]))
    header = ["detuning_MHz"] + [f"eig_{k}_MHz" for k in range(ev.shape[1])]
    cols = [det / MHZ] + [ev[:, k] / MHZ for k in range(ev.shape[1])]
    return Outcome(
        {"min_splitting_MHz": float(min(gaps) / MHZ), "max_splitting_MHz": float(max(gaps) / MHZ)},
        {"eigenfrequencies.csv": _csv_writer(header, cols)},
    )


@experiment("rabi-ladder", "vacuum Rabi oscillations versus qubit detuning",
            n_modes=6, g_MHz=5.0, span_fsr=3.5, detunings=57, t_max_ns=300.0, dt_ns=0.05, record_ns=1.0)
def rabi_ladder(device, p, seed):
    sys = relay.MultimodeSystem.from_device(device, p["n_modes"], (p["g_MHz"] * MHZ, 0.0), single_g=True)
    half = p["span_fsr"] * device.omega_fsr
    dets = np.linspace(-half, half, p["detunings"])
    every = max(1, int(round(p["record_ns"] / p["dt_ns"])))
    rows = []
    rho0 = np.zeros((sys.dim, sys.dim), complex)
    rho0[0, 0] = 1.0
    for d in dets:
        stage = relay.Stage(p["t_max_ns"] * NS, (True, False), (d, 0.0))
        _, tr = relay.lindblad_evolve(sys, rho0, [stage], dt=p["dt_ns"] * NS, record_every=every)
        rows.append(np.column_stack([np.full(tr.times.size, d / MHZ), tr.times / NS, tr.P_e1]))
    table = np.vstack(rows)
    res = dets[np.argmin(np.abs(dets))]
    k_res = np.flatnonzero(table[:, 0] == res / MHZ)
    t_res, p_res = table[k_res, 1], table[k_res, 2]
    return Outcome(
        {"first_minimum_at_resonance_ns": float(t_res[np.argmin(p_res[t_res < 100])])},
        {"rabi_ladder.csv": _csv_writer(["detuning_MHz", "time_ns", "P_e1"], table.T)},
    )


def _relay_trace(device, p, bell_stage: bool):
    sys, _ = relay_state(device, p)
    half = p["half_ns"] if bell_stage else p["swap_ns"]
    proto = relay.RelayProtocol(half * NS, p["swap_ns"] * NS, sqrt2_dephasing=p["sqrt2_dephasing"])
    _, tr = relay.relay_transfer(qinfo.KET_E, proto, sys, dt=p["dt_ns"] * NS)
    return tr


@experiment("relay-transfer", "relay-mode state transfer and process tomography", **RELAY_DEFAULTS)
def relay_transfer(device, p, seed):
    _, m = relay_state(device, p)
    tr = _relay_trace(device, p, False)
    return Outcome(
        {"process_fidelity": m["process_fidelity"], "transfer_probability": m["transfer_probability"]},
        {"trace.csv": tr.to_csv, "chi.json": _json_writer(qinfo.matrix_to_json(m["chi"], qinfo.PAULI_LABELS))},
    )


@experiment("relay-bell", "relay-mode Bell state", **RELAY_DEFAULTS)
def relay_bell(device, p, seed):
    _, m = relay_state(device, p)
    tr = _relay_trace(device, p, True)
    return Outcome(
        {"bell_fidelity": m["bell_fidelity"], "concurrence": m["concurrence"]},
        {"trace.csv": tr.to_csv,
         "rho.json": _json_writer(qinfo.matrix_to_json(m["rho_bell"], qinfo.TWO_QUBIT_LABELS))},
    )


# -------------------------------------------------------- strong coupling


@experiment("spectroscopy-strong", "coupler bias sweep at strong coupling", qubit=0, n_modes=9, points=181)
def spectroscopy_strong(device, p, seed):
    q = p["qubit"]
    qp, cp = device.qubits[q], device.couplers[q]
    modes = device.modes(device.relay_mode + np.arange(p["n_modes"]) - (p["n_modes"] - 1) // 2)
    relay_m = device.mode()
    d_off = cp.delta_off
    ext = np.linspace(d_off, math.pi, p["points"])
    delta = solve_junction_phase(ext, cp)
    g_rel = np.asarray(coupling_g(qp, relay_m, cp, delta))
    sys = relay.MultimodeSystem.from_device(device, p["n_modes"], (1.0, 0.0))
    ev = np.empty((ext.size, p["n_modes"] + 1))
    for i, d in enumerate(delta):
        g_modes = np.array([coupling_g(qp, m, cp, d) for m in modes])
        s = relay.MultimodeSystem(sys.mode_numbers, sys.omega_fsr, np.vstack([g_modes, np.zeros_like(g_modes)]))
        shift = float(qubit_frequency_shift(qp, relay_m, cp, g_rel[i]))
        ev[i] = relay.hamiltonian_eigenfrequencies(s, [shift], qubit=0)[0]
    gm = g_max(device, q)
    header = ["delta_ext_rad", "g_MHz", "kappa_MHz"] + [f"eig_{k}_MHz" for k in range(ev.shape[1])]
    kap = decay_rate_kappa(g_rel, device.omega_fsr)
    cols = [ext, g_rel / MHZ, kap / MHZ] + [ev[:, k] / MHZ for k in range(ev.shape[1])]
    return Outcome(
        {
            "g_max_MHz": abs(gm) / MHZ,
            "kappa_max_MHz": float(decay_rate_kappa(gm, device.omega_fsr) / MHZ),
            "qubit_shift_MHz": float(qubit_frequency_shift(qp, relay_m, cp, gm) / MHZ),
            "g_off_MHz": float(coupling_g(qp, relay_m, cp, math.pi / 2) / MHZ),
        },
        {"strong_spectroscopy.csv": _csv_writer(header, cols)},
    )


@experiment("pingpong", "single-qubit emission and recapture off the shorted end",
            w_fwhm_ns=0.0, compensated=True, t_final_ns=60.0, dt_ns=0.005, waveform=None)
def pingpong(device, p, seed):
    """Long coupler pulse from t = 0 unless an explicit ``waveform`` dict is given."""
    if p["waveform"] is None:
        run = itinerant.long_pulse_pingpong(
            device, p["w_fwhm_ns"] * NS, p["compensated"], p["t_final_ns"] * NS, p["dt_ns"] * NS
        )
    else:
        wf, comp = waveform_from_dict(p["waveform"])
        t0 = min(0.0, wf.span[0])
        run = itinerant.pingpong(
            itinerant.sample_control(
                wf, device, 0, itinerant.half_step_grid(t0, p["t_final_ns"] * NS, p["dt_ns"] * NS), comp
            ),
            2 * device.travel_time,
        )
    r = itinerant.first_returns(run, 2 * device.travel_time)
    P = run.P_e(0)
    header = ["time_ns", "P_e1", "flux_out_1", "kappa1_over_2pi_MHz"]
    cols = [run.times / NS, P, np.abs(run.a_out[0]) ** 2, run.kappa[0] / MHZ]
    return Outcome(
        {"recapture": r[0], "second_return": r[1], "third_return": r[2]},
        {"pingpong.csv": _csv_writer(header, cols)},
    )


@experiment("pingpong-optimize", "shaped emit/catch with a variable wait",
            w_fwhm_ns=3.0, tau_g_ns=10.0, tau_w_start_ns=0.0, tau_w_stop_ns=20.0, tau_w_points=41,
            compensated=True, dt_ns=0.005, tau_w_ns=None, qubit=0)
def pingpong_optimize(device, p, seed):
    f = lambda tw: itinerant.shaped_pingpong_capture(
        device, tw, p["tau_g_ns"] * NS, p["w_fwhm_ns"] * NS, p["compensated"], p["dt_ns"] * NS, p["qubit"]
    )
    if p["tau_w_ns"] is not None:
        return Outcome({"capture": f(p["tau_w_ns"] * NS)})
    grid = np.linspace(p["tau_w_start_ns"], p["tau_w_stop_ns"], p["tau_w_points"]) * NS
    sw = itinerant.capture_sweep(f, grid)
    return Outcome(
        {"peak_capture": sw.max, "argmax_tau_w_ns": sw.argmax / NS},
        {"capture_sweep.csv": _csv_writer(["tau_w_ns", "P_capture"], [sw.parameter / NS, sw.value])},
    )


@experiment("itinerant-transfer", "qubit-to-qubit transfer with shaped itinerant photons",
            w_fwhm_ns=3.0, t_start_ns=9.0, t_stop_ns=16.0, t_points=15, dt_ns=0.005, t_ns=None,
            detuning_2_MHz=0.0)
def itinerant_transfer(device, p, seed):
    kw = dict(w_fwhm=p["w_fwhm_ns"] * NS, dt=p["dt_ns"] * NS, detuning_2=p["detuning_2_MHz"] * MHZ)
    if p["t_ns"] is not None:
        return Outcome({"capture": itinerant.transfer_capture(device, p["t_ns"] * NS, **kw)})
    grid = np.linspace(p["t_start_ns"], p["t_stop_ns"], p["t_points"]) * NS
    sw = itinerant.capture_sweep(lambda t: itinerant.transfer_capture(device, t, **kw), grid)
    run = itinerant.transfer_run(device, sw.argmax, **kw)
    return Outcome(
        {"peak_capture": sw.max, "argmax_t_ns": sw.argmax / NS, "budget_error": run.budget_error()},
        {
            "capture_sweep.csv": _csv_writer(["t_ns", "P_capture"], [sw.parameter / NS, sw.value]),
            "envelope.csv": run.to_csv,
        },
    )


@experiment("itinerant-bell", "Bell state from half an itinerant photon", **ITINERANT_DEFAULTS)
def itinerant_bell(device, p, seed):
    b = itinerant_bell_state(device, p)
    return Outcome(
        {
            "bell_fidelity": b.fidelity,
            "concurrence": b.concurrence,
            "tau_half_ns": b.tau_half / NS,
            "P_e1": float(b.populations[0]),
            "P_e2": float(b.populations[1]),
            "envelope_skewness": b.envelope_skewness(),
        },
        {"envelope.csv": b.run.to_csv, "rho.json": _json_writer(qinfo.matrix_to_json(b.rho, qinfo.TWO_QUBIT_LABELS))},
    )


# -------------------------------------------------------------- analysis


@experiment("chsh", "CHSH correlation versus theta with readout error",
            source="itinerant", theta_rad=None, theta_points=100, n_shots=10_000, sampled=True,
            **ITINERANT_DEFAULTS, **{k: v for k, v in RELAY_DEFAULTS.items() if k not in ("dt_ns", "sqrt2_dephasing")},
            relay_dt_ns=0.01)
def chsh(device, p, seed):
    rho = _bell_source(device, p)
    conf = bell.confusion_from_device(device)
    if p["theta_rad"] is not None:
        th = float(p["theta_rad"])
        if p["sampled"]:
            shots = bell.sample_chsh(rho, th, conf, p["n_shots"], seed)
            s_raw, _ = bell.chsh_from_shots(shots)
            s_cor, _ = bell.chsh_from_shots(shots, conf)
            sig_raw, sig_cor = bell.chsh_error_bar(shots)[0], bell.chsh_error_bar(shots, conf)[0]
        else:
            probs = bell.chsh_probabilities(rho, th, conf)
            s_raw, s_cor = bell.chsh_from_probabilities(probs), bell.chsh_S(rho, th)
            sig_raw = bell.analytic_sigma(probs, p["n_shots"])
            sig_cor = bell.analytic_sigma(probs, p["n_shots"], conf)
        return Outcome({"S_raw": s_raw, "S_corrected": s_cor, "sigma_S_raw": sig_raw, "sigma_S_corrected": sig_cor})
    thetas = bell.theta_grid(p["theta_points"])
    exact = bell.chsh_sweep(rho, conf, thetas, p["n_shots"])
    sw = bell.chsh_sweep(rho, conf, thetas, p["n_shots"], sampled=p["sampled"], seed=_seed_int(seed))
    th_raw, s_raw = exact.argmax("raw")
    _, s_cor = exact.argmax("corrected")
    return Outcome(
        {
            "S_raw_max": s_raw,
            "S_corrected_max": s_cor,
            "theta_max_rad": th_raw,
            "S_raw_max_sampled": sw.argmax("raw")[1],
            "S_corrected_max_sampled": sw.argmax("corrected")[1],
            "clipped_points": float(np.sum(sw.clipped)),
        },
        {"chsh.csv": sw.to_csv},
    )


def _seed_int(seed) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def _bell_source(device, p):
    if p["source"] == "itinerant":
        return itinerant_bell_state(device, p).rho
    if p["source"] == "relay":
        q = dict(p, dt_ns=p["relay_dt_ns"])
        return relay_state(device, q)[1]["rho_bell"]
    if p["source"] in ("triplet", "singlet"):
        return qinfo.dm(qinfo.BELL_TRIPLET if p["source"] == "triplet" else qinfo.BELL_SINGLET)
    raise ExperimentError(f"unknown Bell source {p['source']!r}")


@experiment("tomography-demo", "state tomography of a simulated Bell state from sampled shots",
            source="relay", n_shots=10_000, **ITINERANT_DEFAULTS,
            **{k: v for k, v in RELAY_DEFAULTS.items() if k not in ("dt_ns", "sqrt2_dephasing")}, relay_dt_ns=0.01)
def tomography_demo(device, p, seed):
    rho = _bell_source(device, p)
    target = qinfo.BELL_SINGLET if p["source"] in ("relay", "singlet") else qinfo.BELL_TRIPLET
    exact = qinfo.tomography_probabilities(rho)
    rng = np.random.default_rng(seed)
    sampled = {s: rng.multinomial(p["n_shots"], np.clip(pr, 0, None) / np.clip(pr, 0, None).sum()) / p["n_shots"]
               for s, pr in exact.items()}
    rho_exact = qinfo.state_tomography(exact)
    rho_shots = qinfo.state_tomography(sampled)
    return Outcome(
        {
            "direct_fidelity": qinfo.fidelity_state(rho, target),
            "tomography_fidelity_exact": qinfo.fidelity_state(rho_exact, target),
            "tomography_fidelity_sampled": qinfo.fidelity_state(rho_shots, target),
            "concurrence_sampled": qinfo.concurrence(rho_shots),
        },
        {"rho_reconstructed.json": _json_writer(qinfo.matrix_to_json(rho_shots, qinfo.TWO_QUBIT_LABELS))},
    )


# ---------------------------------------------------------------- config


def resolve_config(name: str, device_dict: dict, overrides: dict[str, Any]) -> dict:
    if name not in REGISTRY:
        raise ExperimentError(f"unknown experiment {name!r}; valid: {', '.join(sorted(REGISTRY))}")
    cfg = {"device": copy.deepcopy(device_dict), "params": dict(REGISTRY[name].defaults)}
    for path, value in overrides.items():
        set_path(cfg, path, value)
    return cfg


def set_path(cfg: dict, path: str, value) -> None:
    parts = path.split(".")
    if parts[0] not in ("device", "params"):
        parts = ["params"] + parts
    node = cfg
    for k in parts[:-1]:
        node = _child(node, k, path)
    leaf = parts[-1]
    if isinstance(node, list):
        idx = _index(node, leaf, path)
        node[idx] = value
        return
    if leaf not in node:
        raise ExperimentError(f"unknown parameter path {path!r}")
    node[leaf] = value


def _child(node, key, path):
    if isinstance(node, list):
        return node[_index(node, key, path)]
    if not isinstance(node, dict) or key not in node:
        raise ExperimentError(f"unknown parameter path {path!r}")
    return node[key]


def _index(node, key, path):
    try:
        i = int(key)
        node[i]
    except (ValueError, IndexError):
        raise ExperimentError(f"unknown parameter path {path!r}") from None
    return i


def run_experiment(name: str, cfg: dict, seed=0) -> Outcome:
    device = device_from_dict(cfg["device"])
    return REGISTRY[name].func(device, dict(cfg["params"]), seed)
