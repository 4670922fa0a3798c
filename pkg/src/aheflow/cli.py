"""Command line entry point.

Exit codes: 0 success, 1 failed check or runtime failure, 2 configuration
error.  Flags may also come from ``AHEFLOW_CONFIG``, ``AHEFLOW_SEED``,
``AHEFLOW_THREADS`` and ``AHEFLOW_OUTPUT_DIR``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, diagnostics, grid
from .bundle import PositivityError
from .config import ConfigError
from .flow import FlowError, run
from .functional import ExponentialPath, path_independence_check
from .topology import char_numbers

COMMANDS = ("run", "chi", "check-path", "check-moment", "check-identities", "check-k-limit", "version")


class CheckFailed(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, complex):
        return str(x)
    return x


def _env_int(name, lo, hi):
    raw = os.environ.get(cfgmod.ENV_PREFIX + name)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{cfgmod.ENV_PREFIX}{name} must be an integer, got {raw!r}") from None
    if not lo <= value < hi:
        raise ConfigError(f"{cfgmod.ENV_PREFIX}{name} out of range: {value}")
    return value


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment config")
    common.add_argument("--seed", type=_u64, metavar="U64", help="seed for random initial data")
    common.add_argument("--threads", type=int, metavar="INT", help="FFT worker threads")
    common.add_argument("--output-dir", metavar="PATH", help="directory for CSV/JSON outputs")
    parser = argparse.ArgumentParser(
        prog="aheflow",
        description="Spectral simulator and checks for the almost Hermitian-Einstein flow on flat 2-tori.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "integrate the flow and write the trajectory CSV",
        "chi": "characteristic numbers and chi(k)",
        "check-path": "path independence of D_k and agreement of its two routes",
        "check-moment": "evolution equation of the moment density",
        "check-identities": "contraction identities (rank one, g = I)",
        "check-k-limit": "1/k approach to the Donaldson flow",
        "version": "print the version",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _resolve(args):
    path = args.config or os.environ.get(cfgmod.ENV_PREFIX + "CONFIG")
    cfg = cfgmod.load_config(path) if path else cfgmod.parse_config("", "<defaults>")
    seed = args.seed if args.seed is not None else _env_int("SEED", 0, 2 ** 64)
    if seed is not None:
        cfg["bundle"]["seed"] = seed
    threads = args.threads if args.threads is not None else _env_int("THREADS", -1, 1 << 16)
    if threads is not None:
        if threads == 0:
            raise ConfigError("--threads must be non-zero")
        grid.set_workers(threads)
    out = args.output_dir or os.environ.get(cfgmod.ENV_PREFIX + "OUTPUT_DIR") or "."
    return cfg, Path(out)


def _write_report(out_dir, cfg, payload):
    payload = _jsonable(dict(payload, config=cfgmod.echo(cfg), version=__version__))
    text = json.dumps(payload, indent=2, sort_keys=True)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / cfg["output"]["report"]).write_text(text + "\n")
    print(text)
    return payload


def cmd_run(cfg, out_dir):
    geometry = cfgmod.build_geometry(cfg)
    m0 = cfgmod.build_metric(cfg, geometry)
    fc = cfgmod.build_flow_config(cfg)
    try:
        fc.check_stability(geometry)
    except ValueError as exc:
        raise ConfigError(f"[flow] {exc}") from None
    error = None
    try:
        traj = run(m0, fc)
    except FlowError as exc:
        traj, error = exc.trajectory, exc
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out_dir / cfg["output"]["csv"], "w", newline="") as fh:
        traj.write_csv(fh, timestamp=stamp)
    if fc.snapshot_every:
        snap_dir = out_dir / cfg["output"]["snapshot_dir"]
        snap_dir.mkdir(parents=True, exist_ok=True)
        for i, (t, m) in enumerate(traj.snapshots):
            grid.write_snapshot(snap_dir / f"H_{i:06d}.field", m.H, "metric", t, beta=m.beta)
    last = traj.records[-1]
    _write_report(
        out_dir,
        cfg,
        {
            "command": "run",
            "stop_reason": traj.stop_reason,
            "rows": len(traj.records),
            "final": vars(last),
            "kappa": traj.kappa,
            "characteristic_numbers": traj.chars0.as_dict(),
        },
    )
    if error is not None:
        raise error
    return 0


def cmd_chi(cfg, out_dir):
    m = cfgmod.build_metric(cfg)
    cn = char_numbers(m)
    _write_report(
        out_dir,
        cfg,
        {
            "command": "chi",
            "characteristic_numbers": cn.as_dict(),
            "chi": {str(k): cn.chi(float(k)) for k in cfg["chi"]["k"]},
        },
    )
    return 0


def _finish(out_dir, cfg, command, reports, extra=None):
    passed = all(r["pass"] for r in reports)
    payload = {"command": command, "reports": reports, "pass": passed}
    payload.update(extra or {})
    _write_report(out_dir, cfg, payload)
    if not passed:
        raise CheckFailed(", ".join(r["name"] for r in reports if not r["pass"]))
    return 0


def cmd_check_path(cfg, out_dir):
    cp = cfg["check_path"]
    geometry = cfgmod.build_geometry(cfg)
    m0 = cfgmod.build_metric(cfg, geometry)
    rank = m0.rank
    try:
        A = cfgmod.mode_sum(geometry, cp["modes"], rank)
        B = cfgmod.mode_sum(geometry, cp["bow"], rank)
    except ValueError as exc:
        raise ConfigError(f"[check_path] {exc}") from None
    paths = [ExponentialPath(m0, A), ExponentialPath(m0, A, B, profile=cp["profile"])]
    rep = path_independence_check(paths, cp["k"], cp["steps"], names=["straight", "bowed"])
    reports = []
    for route, delta in ((r, rep.deltas[r]) for r in ("hamiltonian", "secondary")):
        reports.append(
            {
                "name": f"path_independence_{route}",
                "delta": delta,
                "refinement_order": rep.refinement_orders.get(route),
                "tol": cp["tol"],
                "pass": delta < cp["tol"],
            }
        )
    reports.append(
        {"name": "route_equality", "delta": rep.route_gap, "tol": cp["tol"], "pass": rep.route_gap < cp["tol"]}
    )
    return _finish(out_dir, cfg, "check-path", reports, {"paths": rep.as_dict()})


def cmd_check_moment(cfg, out_dir):
    cm = cfg["check_moment"]
    m0 = cfgmod.build_metric(cfg)
    head = diagnostics.theorem2_refinement(
        m0, cm["k"], [float(d) for d in cm["dt"]], cm["t_check"], cfg["flow"]["integrator"], cm["tol"]
    )
    d = head.as_dict()
    orders = head.refinement_orders
    resolved = head.abs_err > 1e-12 * max(head.lhs_norm, 1.0)
    order_ok = (not resolved) or all(1.5 <= o <= 2.5 for o in orders)
    d["order_ok"] = order_ok
    d["pass"] = head.passed and order_ok
    return _finish(out_dir, cfg, "check-moment", [d])


def cmd_check_identities(cfg, out_dir):
    m = cfgmod.build_metric(cfg)
    try:
        reports = diagnostics.section5_identity_check(m, cfg["check_identities"]["tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return _finish(out_dir, cfg, "check-identities", [r.as_dict() for r in reports])


def cmd_check_k_limit(cfg, out_dir):
    ck = cfg["check_k_limit"]
    m = cfgmod.build_metric(cfg)
    try:
        rep = diagnostics.k_limit_check(m, [float(k) for k in ck["k"]], tol=ck["tol"])
    except ValueError as exc:
        raise ConfigError(f"[check_k_limit] {exc}") from None
    return _finish(out_dir, cfg, "check-k-limit", [rep.as_dict()])


HANDLERS = {
    "run": cmd_run,
    "chi": cmd_chi,
    "check-path": cmd_check_path,
    "check-moment": cmd_check_moment,
    "check-identities": cmd_check_identities,
    "check-k-limit": cmd_check_k_limit,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(f"aheflow {__version__}")
        return 0
    try:
        cfg, out_dir = _resolve(args)
        return HANDLERS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (FlowError, PositivityError, ValueError, OSError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
