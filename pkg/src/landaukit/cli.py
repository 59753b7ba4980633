"""Command-line entry points: simulate, diagnose, scan-singular, axisym.

Exit codes: 0 success, 2 configuration or validation error, 3 domain or
window error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DomainError, LandauKitError, NumericalError, SnapshotFormatError
from .fields import Trajectory, read_snapshot, write_snapshot
from .kernel import KernelModel
from .regularity import eta_dg

logger = logging.getLogger("landaukit")

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4

#: Every tunable threshold in one place.  Keys are ``command.flag``.
DEFAULTS: dict[str, Any] = {
    "diagnose.kappa": 2.0,  # level kappa_eps of the scaled entropy inequality
    "diagnose.r": 0.5,  # inner radius r_eps
    "diagnose.delta": 0.5,  # collar width delta_eps
    "diagnose.lambda": 0.1,  # heat-kernel scale of the local mass estimate
    "diagnose.zoom_n": 32,  # nodes per axis of zoomed grids
    "scan.lambda": 0.2,  # dyadic ratio eps_j = lambda**j
    "scan.j_max": 3,
    "scan.eta_plus": 5.0,  # flag threshold: D > 2 eta_plus
    "axisym.eta": eta_dg(1.0),  # level-set threshold before the Z0 factor
    "axisym.residual_tol": 0.05,  # largest asymmetry residual still called axisymmetric
    "axisym.zoom_n": 32,
    "axisym.max_steps": 6,
}

LOG_COLUMNS = ("t", "mass", "px", "py", "pz", "energy", "entropy", "renorm_factor", "clipped_mass")


# --------------------------------------------------------------------------
# run directories


def config_hash(canonical: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest()


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(obj: Any) -> Any:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(value: Any) -> Any:
    """Replace non-finite floats by strings so JSON stays standard."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(float(value)):
        return str(float(value))
    if isinstance(value, np.generic):
        return value.item()
    return value


def load_run(run_dir: str | Path) -> tuple[dict[str, Any], Trajectory, KernelModel]:
    from .stepper import RunConfig

    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ConfigError(f"run directory {run_dir} has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest.json is not valid JSON: {exc}") from exc
    config = RunConfig.from_mapping(manifest["config"])
    snaps = []
    for name in manifest.get("snapshots", []):
        path = run_dir / name
        if not path.is_file():
            raise ConfigError(f"missing snapshot {path}")
        snaps.append(read_snapshot(path))
    interval = manifest.get("save_interval", float("nan"))
    return manifest, Trajectory(tuple(snaps), interval), config.model


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args: argparse.Namespace) -> int:
    from .stepper import RunConfig, run

    config = RunConfig.from_file(args.config)
    out = Path(args.out)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = run(config)
    elapsed = time.perf_counter() - start
    names = []
    for k, snap in enumerate(result.trajectory):
        name = f"snapshots/snap_{k:05d}.lndf"
        write_snapshot(out / name, snap)
        names.append(name)
    with open(out / "log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for info in result.log:
            writer.writerow(
                [
                    repr(info.t),
                    repr(info.mass),
                    *(repr(float(x)) for x in info.momentum),
                    repr(info.energy),
                    repr(info.entropy),
                    repr(info.renorm_factor),
                    repr(info.clipped_mass),
                ]
            )
    canonical = config.canonical()
    manifest = {
        "config": canonical,
        "config_hash": config_hash(canonical),
        "grid": {"n": config.n, "half_extent": config.half_extent, "h": config.grid.h},
        "model": dataclasses.asdict(config.model) | {"cutoff": "C2"},
        "save_interval": config.dt * config.save_stride,
        "snapshots": names,
        "steps": len(result.log) - 1,
        "h_theorem_ok": result.h_theorem_ok,
        "max_entropy_increase": result.max_entropy_increase,
        "random_subsampling": False,
        "timings": {"wall_seconds": elapsed},
    }
    write_json(out / "manifest.json", _clean(manifest))
    logger.info("wrote %d snapshots to %s in %.2fs", len(names), out, elapsed)
    return EXIT_OK


def _floats(text: str, count: int, what: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected {count} comma-separated numbers, got {text!r}") from exc
    if len(vals) != count:
        raise ConfigError(f"{what}: expected {count} comma-separated numbers, got {len(vals)}")
    return vals


def cmd_diagnose(args: argparse.Namespace) -> int:
    from .diagnostics import local_mass_estimate, moments_and_entropy, scaled_entropy_inequality, write_csv
    from .fields import scaled_solution

    manifest, traj, model = load_run(args.run)
    out = Path(args.out) if args.out else Path(args.run) / "diagnostics"
    out.mkdir(parents=True, exist_ok=True)
    snaps = list(traj)
    if args.at is not None and snaps:
        snaps = [traj.at_time(args.at)]
    reports = [moments_and_entropy(s) for s in snaps]
    write_csv(reports, out / "entropy.csv")
    report: dict[str, Any] = {
        "run_config_hash": manifest.get("config_hash"),
        "entropy": [dataclasses.asdict(r) for r in reports],
        "scaled_entropy": None,
        "local_mass": None,
    }
    if args.cylinder and len(traj):
        t0, vx, vy, vz, r = _floats(args.cylinder, 5, "--cylinder")
        v0 = (vx, vy, vz)
        terms = scaled_entropy_inequality(
            traj, t0, v0, r, args.kappa, args.r_eps, args.delta_eps, model, args.zoom_n
        )
        report["scaled_entropy"] = dataclasses.asdict(terms)
        zoom = scaled_solution(traj, t0, v0, r, args.zoom_n, 2.0, t_window=4.0)
        report["local_mass"] = dataclasses.asdict(local_mass_estimate(zoom, args.lam, r, model))
    report["parameters"] = {
        "cylinder": args.cylinder,
        "kappa": args.kappa,
        "r_eps": args.r_eps,
        "delta_eps": args.delta_eps,
        "lambda": args.lam,
        "zoom_n": args.zoom_n,
        "at": args.at,
    }
    write_json(out / "report.json", _clean(report))
    return EXIT_OK


def read_seeds(path: str | Path) -> list[tuple[float, float, float, float]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"seeds file {path} not found")
    text = path.read_text()
    rows: list[list[float]]
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"seeds file is not valid JSON: {exc}") from exc
        rows = data["seeds"] if isinstance(data, dict) else data
    else:
        rows = [[float(x) for x in line.split(",")] for line in text.splitlines() if line.strip() and not line.startswith("#")]
    seeds = []
    for i, row in enumerate(rows):
        if len(row) != 4:
            raise ConfigError(f"seed {i}: expected (t, vx, vy, vz), got {row}")
        seeds.append(tuple(float(x) for x in row))
    return seeds


def cmd_scan(args: argparse.Namespace) -> int:
    from .regularity import dissipation_scan, hausdorff_upper_bound, m_star

    seeds = read_seeds(args.seeds)
    _, traj, model = load_run(args.run)
    scans = [dissipation_scan(traj, s[0], s[1:], args.lam, args.j_max, model) for s in seeds]
    result = hausdorff_upper_bound(scans, args.eta, m_star(model.gamma))
    payload = result.manifest() | {"j_max": args.j_max, "lambda": args.lam}
    text = json.dumps(_clean(payload), sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_axisym(args: argparse.Namespace) -> int:
    from .axisym import cylindrical_reduce, off_axis_criterion

    axis = _floats(args.axis, 6, "--axis")
    base, direction = axis[:3], axis[3:]
    t0, vx, vy, vz = _floats(args.point, 4, "--point")
    _, traj, model = load_run(args.run)
    if not len(traj):
        raise ConfigError("run has no snapshots")
    snap = traj.at_time(t0)
    residual = cylindrical_reduce(snap, base, direction).residual
    verdict = off_axis_criterion(
        traj, t0, (vx, vy, vz), model, base, direction, args.eta, args.zoom_n, args.max_steps
    )
    axisymmetric = residual <= args.residual_tol
    payload = verdict.report() | {
        "asymmetry_residual": residual,
        "axisymmetric": axisymmetric,
        "verdict": ("certified" if verdict.certified else "not_certified") if axisymmetric else "non_axisymmetric",
        "point": [t0, vx, vy, vz],
        "axis": {"base": base, "direction": direction},
    }
    text = json.dumps(_clean(payload), sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landaukit", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate a run from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output run directory")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("diagnose", help="moments, entropies and local estimates of a run")
    d.add_argument("--run", required=True)
    d.add_argument("--at", type=float, default=None, help="evaluate moments at this time only")
    d.add_argument("--cylinder", default=None, help="t0,vx,vy,vz,eps for the zoomed estimates")
    d.add_argument("--kappa", type=float, default=DEFAULTS["diagnose.kappa"])
    d.add_argument("--r-eps", dest="r_eps", type=float, default=DEFAULTS["diagnose.r"])
    d.add_argument("--delta-eps", dest="delta_eps", type=float, default=DEFAULTS["diagnose.delta"])
    d.add_argument("--lambda", dest="lam", type=float, default=DEFAULTS["diagnose.lambda"])
    d.add_argument("--zoom-n", dest="zoom_n", type=int, default=DEFAULTS["diagnose.zoom_n"])
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_diagnose)

    c = sub.add_parser("scan-singular", help="dyadic dissipation scan and covering bound")
    c.add_argument("--run", required=True)
    c.add_argument("--seeds", required=True, help="JSON list or CSV rows of t,vx,vy,vz")
    c.add_argument("--lambda", dest="lam", type=float, default=DEFAULTS["scan.lambda"])
    c.add_argument("--eta", type=float, default=DEFAULTS["scan.eta_plus"])
    c.add_argument("--j-max", dest="j_max", type=int, default=DEFAULTS["scan.j_max"])
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_scan)

    a = sub.add_parser("axisym", help="off-axis boundedness criterion for axisymmetric runs")
    a.add_argument("--run", required=True)
    a.add_argument("--axis", default="0,0,0,0,0,1", help="bx,by,bz,dx,dy,dz")
    a.add_argument("--point", required=True, help="t0,vx,vy,vz")
    a.add_argument("--eta", type=float, default=DEFAULTS["axisym.eta"])
    a.add_argument("--residual-tol", dest="residual_tol", type=float, default=DEFAULTS["axisym.residual_tol"])
    a.add_argument("--zoom-n", dest="zoom_n", type=int, default=DEFAULTS["axisym.zoom_n"])
    a.add_argument("--max-steps", dest="max_steps", type=int, default=DEFAULTS["axisym.max_steps"])
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_axisym)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LandauKitError as exc:  # pragma: no cover - every family is mapped above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
