"""Command line: ``sim run``, ``sim sweep``, ``sim golden``, ``sim list``.

Exit codes: 0 success, 1 golden check failed, 2 usage or configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import bell, experiments, itinerant, qinfo
from .device import InvalidParameterError, SingularCouplerError, default_device_dict
from .kernels import SolverError
from .relay import IntegrationError

EXIT_OK, EXIT_GOLDEN, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("remotebell")

USAGE_ERRORS = (
    experiments.ExperimentError,
    itinerant.ConfigurationError,
    bell.ConfigurationError,
    qinfo.ConfigurationError,
    InvalidParameterError,
    KeyError,
    FileNotFoundError,
    json.JSONDecodeError,
)
NUMERICAL_ERRORS = (
    IntegrationError,
    SolverError,
    SingularCouplerError,
    qinfo.InvariantViolation,
    FloatingPointError,
    np.linalg.LinAlgError,
    bell.CorrectionError,
)


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ golden


@dataclass(frozen=True)
class GoldenRecord:
    experiment: str
    metric: str
    value: float | None = None
    tolerance: float | None = None
    range: tuple[float, float] | None = None
    source: str = ""
    overrides: tuple = ()

    def __post_init__(self):
        if self.range is None and (self.value is None or self.tolerance is None):
            raise ValueError(f"golden record {self.metric} needs value+tolerance or a range")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("golden tolerance must be > 0")

    def check(self, x: float) -> bool:
        ok = True
        if self.value is not None:
            ok &= abs(x - self.value) <= self.tolerance
        if self.range is not None:
            ok &= self.range[0] <= x <= self.range[1]
        return bool(ok)

    def describe(self) -> str:
        parts = []
        if self.value is not None:
            parts.append(f"{self.value:g} +/- {self.tolerance:g}")
        if self.range is not None:
            parts.append(f"in [{self.range[0]:g}, {self.range[1]:g}]")
        return ", ".join(parts)


def load_golden(path=None) -> list[GoldenRecord]:
    if path is None:
        text = resources.files("remotebell").joinpath("data/golden.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out = []
    for r in json.loads(text)["records"]:
        rng = tuple(r["range"]) if "range" in r else None
        ov = tuple(sorted(r.get("overrides", {}).items()))
        out.append(GoldenRecord(r["experiment"], r["metric"], r.get("value"), r.get("tolerance"), rng,
                                r.get("source", ""), ov))
    return out


def applicable_golden(name: str, cfg: dict, records) -> list[GoldenRecord]:
    """Records whose own configuration equals ``cfg`` exactly."""
    out = []
    for r in records:
        if r.experiment != name:
            continue
        ref = experiments.resolve_config(name, default_device_dict(), dict(r.overrides))
        if _canonical(ref) == _canonical(cfg):
            out.append(r)
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=float)


# ------------------------------------------------------------------ output


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_outputs(outcome: experiments.Outcome, out_dir: str | None) -> dict[str, str]:
    if out_dir is None:
        return {}
    os.makedirs(out_dir, exist_ok=True)
    hashes = {}
    for name in sorted(outcome.writers):
        path = os.path.join(out_dir, name)
        outcome.writers[name](path)
        hashes[name] = sha256(path)
    return hashes


def write_summary(out_dir: str | None, summary: dict) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True, default=float)
        fh.write("\n")


def print_table(metrics: dict, checks: list[tuple[GoldenRecord, float, bool]], stream=None) -> None:
    stream = stream or sys.stdout
    checked = {r.metric: (r, ok) for r, _, ok in checks}
    width = max([len(k) for k in metrics] + [6])
    for k, v in metrics.items():
        line = f"  {k:<{width}}  {v: .6g}"
        if k in checked:
            r, ok = checked[k]
            line += f"   golden {r.describe():<22} {'PASS' if ok else 'FAIL'}"
        print(line, file=stream)


def _check(metrics, records):
    out = []
    for r in records:
        x = metrics.get(r.metric, math.nan)
        out.append((r, x, r.check(x)))
    return out


# ------------------------------------------------------------------ parsing


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v.strip())
    return out


def parse_grid(spec: str) -> list:
    spec = spec.strip()
    if not spec:
        raise UsageError("empty grid")
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError("grid must be start:stop:num or a comma list")
        start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        if num < 1:
            raise UsageError("grid needs at least one point")
        return [float(x) for x in np.linspace(start, stop, num)]
    vals = [parse_value(x.strip()) for x in spec.split(",") if x.strip()]
    if not vals:
        raise UsageError("empty grid")
    return vals


def load_device_dict(path):
    if path is None:
        return default_device_dict()
    with open(path) as fh:
        return json.load(fh)


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    cfg = experiments.resolve_config(args.experiment, load_device_dict(args.device), parse_sets(args.set))
    outcome = experiments.run_experiment(args.experiment, cfg, args.seed)
    checks = _check(outcome.metrics, applicable_golden(args.experiment, cfg, load_golden()))
    files = write_outputs(outcome, args.out)
    write_summary(
        args.out,
        {
            "experiment": args.experiment,
            "seed": args.seed,
            "config": cfg,
            "metrics": outcome.metrics,
            "golden": [{"metric": r.metric, "target": r.describe(), "value": x, "pass": ok} for r, x, ok in checks],
            "files": files,
        },
    )
    print(f"{args.experiment}:")
    print_table(outcome.metrics, checks)
    return EXIT_OK if all(ok for _, _, ok in checks) else EXIT_GOLDEN


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid)
    base = experiments.resolve_config(args.experiment, load_device_dict(args.device), parse_sets(args.set))
    leaf = args.param.split(".")[-1]
    rows, names = [], None
    for i, value in enumerate(grid):
        cfg = json.loads(json.dumps(base))
        experiments.set_path(cfg, args.param, value)
        m = experiments.run_experiment(args.experiment, cfg, [args.seed, i]).metrics
        if names is None:
            names = list(m)
        rows.append([float(value)] + [float(m[k]) for k in names])
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"sweep_{leaf}.csv")
    np.savetxt(path, np.array(rows), delimiter=",", header=",".join([leaf] + names), comments="", fmt="%.12e")
    write_summary(
        out,
        {
            "experiment": args.experiment,
            "seed": args.seed,
            "config": base,
            "sweep": {"param": args.param, "grid": grid},
            "files": {os.path.basename(path): sha256(path)},
        },
    )
    print(f"{args.experiment}: {len(rows)} points -> {path}")
    return EXIT_OK


def cmd_golden(args) -> int:
    records = load_golden(args.golden)
    groups: dict[tuple, list[GoldenRecord]] = {}
    for r in records:
        if args.only and r.experiment not in args.only:
            continue
        groups.setdefault((r.experiment, r.overrides), []).append(r)
    failed = 0
    summary = []
    for k, ((name, overrides), recs) in enumerate(groups.items()):
        cfg = experiments.resolve_config(name, default_device_dict(), dict(overrides))
        outcome = experiments.run_experiment(name, cfg, args.seed)
        checks = _check(outcome.metrics, recs)
        files = write_outputs(outcome, os.path.join(args.out, f"{k:02d}_{name}") if args.out else None)
        label = name + (" " + " ".join(f"{p}={v}" for p, v in overrides) if overrides else "")
        print(f"{label}:")
        print_table({r.metric: x for r, x, _ in checks}, checks)
        failed += sum(not ok for _, _, ok in checks)
        summary.append(
            {
                "experiment": name,
                "overrides": dict(overrides),
                "checks": [{"metric": r.metric, "target": r.describe(), "value": x, "pass": ok} for r, x, ok in checks],
                "files": files,
            }
        )
    write_summary(args.out, {"seed": args.seed, "groups": summary, "failed": failed})
    print(f"golden: {sum(len(g) for g in groups.values()) - failed} passed, {failed} failed")
    return EXIT_GOLDEN if failed else EXIT_OK


def cmd_list(args) -> int:
    for name in sorted(experiments.REGISTRY):
        print(f"{name:<20} {experiments.REGISTRY[name].figure}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Remote Bell-state simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("experiment", help="experiment name (see `sim list`)")
        sp.add_argument("--device", help="device JSON file (default: bundled device)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        sp.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="repeat an experiment over one parameter")
    common(s)
    s.add_argument("--param", required=True, help="dotted config path, e.g. params.t_ns")
    s.add_argument("--grid", required=True, help="start:stop:num or comma list")
    s.set_defaults(func=cmd_sweep)
    g = sub.add_parser("golden", help="run the golden regression suite")
    g.add_argument("--out", help="output directory")
    g.add_argument("--golden", help="alternative golden JSON file")
    g.add_argument("--only", action="append", help="restrict to an experiment (repeatable)")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_golden)
    ls = sub.add_parser("list", help="list experiments")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            return args.func(args)
    except (UsageError, *USAGE_ERRORS) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
