"""Command-line interface.

    infinitas <subcommand> --spec FILE [--seed N] [--out DIR] [--json]

Subcommands: rabier, flow, acv, density, links, chi, gb-check, scan.
Exit codes: 0 success, 2 at least one identity verdict failed, 3 at least one
link failed to stabilize, 4 spec or input parse error.  The environment
variable INFINITAS_THREADS caps the worker count (default: hardware
parallelism); results are byte-identical across thread counts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import outputs
from .acv import estimate_K, infimum_profile, classify_value, section_MR_test
from .density import (
    FiberGeometry,
    geometric_constants,
    kappa_density,
    lambda_infinity,
    sigma_density,
    theta_density,
)
from .familyspec import FamilySpec, RadiusSchedule, SpecError, load_spec
from .polynomial import PolynomialError
from .rabier import FlowBlockedError, check_rabier_equivalences, rabier_number, transport_fiber
from .topology import LevelSet, chi_l_infty, stable_link
from .verify import continuity_scan, gb_identity_check, hypersurface_gb_check

EXIT_OK = 0
EXIT_IDENTITY_FAIL = 2
EXIT_NOT_STABILIZED = 3
EXIT_SPEC_ERROR = 4


def _parse_schedule(text: Optional[str], default: RadiusSchedule) -> RadiusSchedule:
    if not text:
        return default
    try:
        r0, factor, steps = text.split(":")
        return RadiusSchedule(float(r0), float(factor), int(steps))
    except (ValueError, SpecError) as exc:
        raise SpecError(f"bad schedule {text!r} (want r0:factor:steps): {exc}")


def _parse_grid(text: Optional[str]):
    if not text:
        return None
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise SpecError(f"bad grid {text!r} (want a:b:n): {exc}")


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise SpecError(f"bad vector {text!r}: {exc}")


def _read_matrix(path: Optional[str]) -> np.ndarray:
    if path and path != "-":
        with open(path) as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    rows = []
    for line in text.strip().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(t) for t in line.replace(",", " ").split()])
    if not rows:
        raise SpecError("empty matrix input")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise SpecError("ragged matrix input")
    return np.array(rows)


def _emit(payload: dict, as_json: bool, lines: List[str]) -> None:
    if as_json:
        print(json.dumps(payload, sort_keys=True, default=_json_default))
    else:
        for line in lines:
            print(line)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fmt(v) -> str:
    return outputs._fmt(v)


# -- subcommand handlers -------------------------------------------------------


def cmd_rabier(args) -> int:
    A = _read_matrix(args.matrix)
    nu = rabier_number(A)
    rep = check_rabier_equivalences(A, seed=args.seed)
    payload = {"nu": nu, **rep}
    _emit(payload, args.json, [
        f"nu = {_fmt(nu)}",
        f"inf |A^T phi| (minimization)   = {_fmt(rep['inf_adjoint'])}",
        f"inscribed ball radius          = {_fmt(rep['ball_radius'])}",
        f"smallest singular value        = {_fmt(rep['singular_distance'])}",
        f"max pairwise discrepancy       = {_fmt(rep['discrepancy'])}",
    ])
    return EXIT_OK


def cmd_flow(args) -> int:
    spec = load_spec(args.spec)
    x0 = _parse_vector(args.start)
    target = _parse_vector(args.to)
    if args.from_ is not None:
        declared = _parse_vector(args.from_)
        actual = spec.map_values(x0)
        if np.max(np.abs(declared - actual)) > 1e-6:
            raise SpecError(f"--from {args.from_} does not match G(start) = {actual.tolist()}")
    try:
        res = transport_fiber(spec, x0, target)
    except FlowBlockedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_STABILIZED
    payload = {
        "endpoint": res.endpoint.tolist(),
        "max_identity_residual": res.max_identity_residual,
        "steps_accepted": res.steps_accepted,
        "min_malgrange": res.min_malgrange,
    }
    _emit(payload, args.json, [
        "endpoint = " + ",".join(_fmt(v) for v in res.endpoint),
        f"max identity residual = {_fmt(res.max_identity_residual)}",
        f"accepted steps = {res.steps_accepted}",
    ])
    return EXIT_OK


def cmd_acv(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    grid = _parse_grid(args.grid)
    seed = spec.seed if args.seed is None else args.seed
    report = estimate_K(spec, grid, schedule=schedule, seed=seed)
    rows = []
    for y, cls in report.classifications:
        rows.append(f"y = {_fmt(y)}  ->  {cls.kind}"
                    + (f" (slope {_fmt(cls.slope)})" if cls.slope is not None else ""))
    rows.append("K0 = " + (", ".join(_fmt(cp.value[0]) for cp in report.k0) or "(empty)"))
    rows.append("K-infinity = " + (", ".join(_fmt(s.value) for s in report.kinf) or "(empty)"))
    rows.append("K = " + (", ".join(_fmt(v) for v in report.k_values) or "(empty)"))
    payload = {
        "k0": [cp.value[0] for cp in report.k0],
        "kinf": [s.value for s in report.kinf],
        "K": report.k_values,
        "classifications": [(y, c.kind) for y, c in report.classifications],
        "coverage_warning": report.coverage_warning,
    }
    _emit(payload, args.json, rows)
    if args.out:
        grid_vals = grid if grid is not None else (spec.grid[0].values if spec.grid else [])
        path = os.path.join(args.out, "acv.csv")
        outputs._write(path, outputs.acv_csv_text(report, grid_vals))
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_density(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    seed = spec.seed if args.seed is None else args.seed
    y = _parse_vector(args.at)
    fiber = LevelSet.from_spec(spec, y, "fiber")
    geometry = FiberGeometry(fiber, schedule)
    estimates = []
    for target in args.targets.split(","):
        target = target.strip()
        if target.startswith("kappa:"):
            estimates.append(kappa_density(fiber, i=int(target.split(":")[1]),
                                           schedule=schedule, geometry=geometry))
        elif target.startswith("sigma:"):
            estimates.append(sigma_density(fiber, i=int(target.split(":")[1]),
                                           schedule=schedule, geometry=geometry))
        elif target == "theta":
            estimates.append(theta_density(fiber, schedule=schedule, seed=seed))
        elif target.startswith("lambda:"):
            which = "sublevel" if spec.kind == "hypersurface-family" else "fiber"
            estimates.append(lambda_infinity(fiber, k=int(target.split(":")[1]),
                                             which=which, schedule=schedule, seed=seed))
        elif target == "lambda0":
            which = "sublevel" if spec.kind == "hypersurface-family" else "fiber"
            estimates.append(lambda_infinity(fiber, k=0, which=which,
                                             schedule=schedule, seed=seed))
        else:
            raise SpecError(f"unknown density target {target!r}")
    lines = []
    for est in estimates:
        lines.append(f"{est.target}: limit = {_fmt(est.limit)} +- {_fmt(est.error)} "
                     f"[{est.status}; rule {est.rule}]")
    payload = {est.target: {"limit": est.limit, "error": est.error,
                            "status": est.status, "rule": est.rule,
                            "flags": est.flags} for est in estimates}
    _emit(payload, args.json, lines)
    if args.out:
        path = os.path.join(args.out, "density.csv")
        outputs._write(path, outputs.density_csv_text(estimates))
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_links(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    y = _parse_vector(args.at)
    level_set = LevelSet.from_spec(spec, y, args.set)
    report = stable_link(level_set, schedule)
    lines = [f"R = {_fmt(R)}  chi = {_fmt(c)}  components = {_fmt(k)}"
             for R, c, k in zip(report.radii, report.chi, report.components)]
    if report.stabilized:
        lines.append(f"stable chi = {report.stable_chi} from R = {_fmt(report.stabilization_radius)}")
    else:
        lines.append("not stabilized")
    payload = {"radii": list(report.radii), "chi": list(report.chi),
               "stable_chi": report.stable_chi,
               "stabilization_radius": report.stabilization_radius}
    _emit(payload, args.json, lines)
    if args.out:
        path = os.path.join(args.out, "links.csv")
        outputs._write(path, outputs.link_csv_text(report))
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK if report.stabilized else EXIT_NOT_STABILIZED


def cmd_chi(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    seed = spec.seed if args.seed is None else args.seed
    y = _parse_vector(args.at)
    level_set = LevelSet.from_spec(spec, y, args.set)
    est = chi_l_infty(level_set, args.l, planes=args.planes, seed=seed,
                      schedule=schedule)
    payload = {"value": est.value, "stderr": est.stderr, "planes": est.planes_used,
               "failures": est.failures, "exact": est.exact}
    _emit(payload, args.json, [
        f"chi_{args.l}_infinity = {_fmt(est.value)} +- {_fmt(est.stderr)}"
        + (" (exact)" if est.exact else f" ({est.planes_used} planes)"),
    ])
    return EXIT_OK


def cmd_gb_check(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    seed = spec.seed if args.seed is None else args.seed
    y = _parse_vector(args.at)
    level_set = LevelSet.from_spec(spec, y, args.set)
    hint = spec.chi_hints.get(args.set)
    residuals = gb_identity_check(level_set, schedule=schedule, planes=args.planes,
                                  seed=seed, chi_hint=hint)
    if spec.s == 1:
        residuals += hypersurface_gb_check(spec, y, schedule=schedule,
                                           planes=args.planes, seed=seed)
    lines = [f"{r.identity:22s} left = {_fmt(r.left):>14s}  right = {_fmt(r.right):>14s}"
             f"  [{r.verdict}]" + (f" ({r.detail})" if r.detail else "")
             for r in residuals]
    payload = [{"identity": r.identity, "left": r.left, "right": r.right,
                "error": r.error, "verdict": r.verdict, "detail": r.detail}
               for r in residuals]
    _emit({"identities": payload}, args.json, lines)
    if args.out:
        path = os.path.join(args.out, "gb-check.csv")
        outputs._write(path, outputs.identity_csv_text(residuals))
        print(f"wrote {path}", file=sys.stderr)
    if any(r.verdict == "fail" for r in residuals):
        return EXIT_IDENTITY_FAIL
    if any(r.verdict == "inconclusive" for r in residuals):
        return EXIT_NOT_STABILIZED
    return EXIT_OK


def cmd_scan(args) -> int:
    spec = load_spec(args.spec)
    schedule = _parse_schedule(args.schedule, spec.schedule)
    seed = spec.seed if args.seed is None else args.seed
    grid = _parse_grid(args.grid)
    threads = int(os.environ.get("INFINITAS_THREADS", "0")) or None
    result = continuity_scan(spec, grid, schedule=schedule, planes=args.planes,
                             seed=seed, threads=threads)
    lines = [f"scanned {len(result.nodes)} nodes; K estimate = "
             + (", ".join(_fmt(v) for v in result.acv.k_values) or "(empty)")]
    for j in result.jumps:
        lines.append(f"jump in {j.quantity} over [{_fmt(j.y_lo)}, {_fmt(j.y_hi)}] "
                     f"delta = {_fmt(j.delta)} "
                     + ("(contains K estimate)" if j.contained else "(NOT near K!)"))
    if not result.jumps:
        lines.append("no jumps flagged")
    payload = {
        "grid": list(result.grid),
        "K": result.acv.k_values,
        "jumps": [{"quantity": j.quantity, "lo": j.y_lo, "hi": j.y_hi,
                   "delta": j.delta, "contained": j.contained} for j in result.jumps],
    }
    _emit(payload, args.json, lines)
    out_dir = args.out or "."
    paths = outputs.emit_outputs(result, out_dir)
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infinitas",
        description="Numerical asymptotic regularity toolkit for polynomial families")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("--spec", required=True, help="family spec file (TOML)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--json", action="store_true")
        p.add_argument("--out", default=None, help="output directory for CSV/SVG")
        p.add_argument("--schedule", default=None, help="radius schedule r0:factor:steps")

    p = sub.add_parser("rabier", help="Rabier number and its equivalent characterizations")
    p.add_argument("--matrix", default="-", help="matrix file (CSV-like), - for stdin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rabier)

    p = sub.add_parser("flow", help="transport a point between fibers")
    common(p)
    p.add_argument("--start", required=True, help="start point x, comma-separated")
    p.add_argument("--to", required=True, help="target parameter value(s)")
    p.add_argument("--from", dest="from_", default=None,
                   help="declared start value(s), checked against G(start)")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("acv", help="estimate generalized critical values")
    common(p)
    p.add_argument("--grid", default=None, help="parameter grid a:b:n")
    p.set_defaults(func=cmd_acv)

    p = sub.add_parser("density", help="densities at infinity of one fiber")
    common(p)
    p.add_argument("--at", required=True, help="parameter value(s)")
    p.add_argument("--targets", default="kappa:0",
                   help="comma list like kappa:0,sigma:1,theta,lambda:0")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("links", help="link Euler characteristics over the schedule")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--set", choices=("fiber", "sublevel"), default="fiber")
    p.set_defaults(func=cmd_links)

    p = sub.add_parser("chi", help="sectional average chi_l at infinity")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--set", choices=("fiber", "sublevel"), default="fiber")
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--planes", type=int, default=100)
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("gb-check", help="verify the Gauss-Bonnet identities")
    common(p)
    p.add_argument("--at", required=True)
    p.add_argument("--set", choices=("fiber", "sublevel"), default="fiber")
    p.add_argument("--planes", type=int, default=100)
    p.set_defaults(func=cmd_gb_check)

    p = sub.add_parser("scan", help="continuity scan over the parameter grid")
    common(p)
    p.add_argument("--grid", default=None, help="parameter grid a:b:n")
    p.add_argument("--planes", type=int, default=None)
    p.set_defaults(func=cmd_scan)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, PolynomialError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR


if __name__ == "__main__":
    sys.exit(main())
