"""Command-line front end: ``fnx kernels|norm|extend|verify|report``.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or input,
3 a hypothesis guard refused the run (the required minimum is printed).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysis import (
    HypothesisError,
    check_hypotheses,
    intrinsic_norm_localmeans,
    intrinsic_norm_peetre,
    norm_fourier_rn,
    norm_localmeans_rn,
)
from .config import SUITES, ConfigError, load_config
from .expdsl import ParseError
from .extension import check_extension_hypotheses, extend, restriction_residuals
from .geometry import DomainError
from .gridcore import GridError, read_grid, write_grid
from .kernels import KernelError, read_bundle, write_bundle
from .suites import Context, run_suite
from .varspaces import SOLVER_RTOL

SCHEMA = "fnx-report/1"
NORM_KINDS = ("fourier", "localmeans", "intrinsic-peetre", "intrinsic-localmeans")


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def make_report(cfg, body: dict) -> dict:
    report = {"schema": SCHEMA, "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
              "config": cfg.as_dict()}
    report.update(body)
    return _clean(report)


def dump_report(report: dict, path=None) -> str:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


def _write_check_csv(path, suites: dict):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["suite", "check", "value", "relation", "tolerance", "passed", "grid_h", "cells", "jmax"])
        for name, suite in suites.items():
            for c in suite["checks"]:
                out.writerow([name, c["name"], c["value"], c["relation"], c["tolerance"], c["passed"],
                              c["grid_h"], c["cells"], c["jmax"]])


def _write_scale_csv(path, per_scale, tolerance, h, jmax):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["level", "contribution", "tolerance", "grid_h", "jmax"])
        for level, value in per_scale:
            out.writerow([level, value, tolerance, h, jmax])


# -- subcommands ---------------------------------------------------------------------------


def cmd_kernels(args, cfg) -> int:
    ctx = Context(cfg)
    if args.action == "build":
        out = write_bundle(ctx.system, args.out)
        print(f"wrote {len(ctx.system.phi_levels)} levels to {out} (hash {ctx.system.config_hash})")
        return 0
    if args.bundle:
        ctx.__dict__["system"] = read_bundle(args.bundle)
    result = run_suite("moments", ctx)
    dump_report(make_report(cfg, {"suites": {"moments": result.as_dict()}, "passed": result.passed}), args.out)
    return 0 if result.passed else 1


def _input_function(args, ctx):
    if args.input:
        f = read_grid(args.input)
        if f.ndim != ctx.cfg.dim or not math.isclose(f.spacing, ctx.cfg.spacing, rel_tol=1e-12):
            raise GridError(f"{args.input} is not on the configured grid (h = {ctx.cfg.spacing:g})")
        return f
    return ctx.family()[args.member]


def cmd_norm(args, cfg) -> int:
    if args.space:
        cfg = cfg.with_(space=args.space.upper())
    ctx = Context(cfg)
    f = _input_function(args, ctx)
    prm, spec, w = ctx.params(), ctx.spec, ctx.weight
    consts = check_hypotheses(prm, spec, w, f)
    if args.kind == "fourier":
        rep = norm_fourier_rn(f, spec, w, prm)
    elif args.kind == "localmeans":
        rep = norm_localmeans_rn(f, ctx.system, spec, w, prm)
    elif args.kind == "intrinsic-peetre":
        rep = intrinsic_norm_peetre(f, ctx.domain, ctx.system, spec, w, prm)
    else:
        rep = intrinsic_norm_localmeans(f, ctx.domain, ctx.system, spec, w, prm)
    body = {"norm": {"kind": args.kind, "value": rep.value, "peetre": rep.peetre, "per_scale": rep.per_scale,
                     "grid_h": rep.grid_h, "jmax": rep.truncation_j, "tolerance": SOLVER_RTOL,
                     "hypotheses": consts}}
    dump_report(make_report(cfg, body), args.out)
    if args.csv:
        _write_scale_csv(args.csv, rep.per_scale, SOLVER_RTOL, rep.grid_h, rep.truncation_j)
    return 0


def cmd_extend(args, cfg) -> int:
    ctx = Context(cfg)
    f = _input_function(args, ctx)
    check_extension_hypotheses(ctx.system, ctx.spec, ctx.weight, ctx.params(), f)
    Ef = extend(f, ctx.domain, ctx.system, cfg.jmax)
    write_grid(args.out, Ef)
    res = restriction_residuals(f, ctx.domain, ctx.system, cfg.jmax, Ef)
    print(f"restriction residual (interior) {res['interior']:.3e}  near boundary {res['near_boundary']:.3e}  "
          f"exact interior {res['exact_interior']:.3e}  (h = {cfg.spacing:g}, jmax = {cfg.jmax})")
    return 0


def cmd_verify(args, cfg) -> int:
    names = list(SUITES) if "all" in args.suite else list(dict.fromkeys(args.suite))
    ctx = Context(cfg)
    suites = {}
    for name in names:
        result = run_suite(name, ctx)
        suites[name] = result.as_dict()
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {name}", file=sys.stderr)
    passed = all(s["passed"] for s in suites.values())
    report = make_report(cfg, {"suites": suites, "passed": passed})
    dump_report(report, args.out or cfg.output)
    if args.csv or cfg.csv:
        _write_check_csv(args.csv or cfg.csv, report["suites"])
    return 0 if passed else 1


def cmd_report(args, cfg) -> int:
    try:
        report = json.loads(Path(args.input).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {args.input}: {exc}") from exc
    if report.get("schema") != SCHEMA:
        raise ConfigError(f"{args.input} is not an {SCHEMA} report")
    for name, suite in report.get("suites", {}).items():
        for c in suite["checks"]:
            mark = "ok  " if c["passed"] else "FAIL"
            print(f"{mark} {name:12s} {c['name']:40s} {c['value']!s:>24} {c['relation']} {c['tolerance']}"
                  f"  (cells {c['cells']}, jmax {c['jmax']})")
    if args.csv:
        _write_check_csv(args.csv, report.get("suites", {}))
    return 0 if report.get("passed", False) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fnx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="INI run configuration (defaults when omitted)")
        p.add_argument("--out", help="output path (report JSON unless stated otherwise)")
        return p

    k = with_config(sub.add_parser("kernels", help="build or check a kernel system"))
    k.add_argument("action", choices=("build", "check"))
    k.add_argument("--bundle", help="check a stored bundle instead of rebuilding")

    n = with_config(sub.add_parser("norm", help="compute one norm of a grid function"))
    n.add_argument("--space", choices=("B", "F", "b", "f"))
    n.add_argument("--kind", choices=NORM_KINDS, default="fourier")
    n.add_argument("--in", dest="input", help="grid file (default: a family member)")
    n.add_argument("--member", type=int, default=0, help="family member when --in is absent")
    n.add_argument("--csv", help="per-scale table")

    e = with_config(sub.add_parser("extend", help="extend a function from the domain"))
    e.add_argument("--in", dest="input", help="grid file (default: a family member)")
    e.add_argument("--member", type=int, default=0)

    v = with_config(sub.add_parser("verify", help="run verification suites"))
    v.add_argument("--suite", action="append", choices=SUITES + ("all",), required=True)
    v.add_argument("--csv", help="one row per check")

    r = sub.add_parser("report", help="summarise a stored report")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--csv")
    r.add_argument("--config", help=argparse.SUPPRESS)
    return parser


COMMANDS = {"kernels": cmd_kernels, "norm": cmd_norm, "extend": cmd_extend,
            "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        if args.command == "extend" and not args.out:
            raise ConfigError("extend needs --out")
        if args.command == "kernels" and args.action == "build" and not args.out:
            raise ConfigError("kernels build needs --out DIR")
        return COMMANDS[args.command](args, cfg)
    except HypothesisError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        if "required" not in str(exc):
            for key, value in exc.required.items():
                print(f"required {key} > {value:.6g}", file=sys.stderr)
        return 3
    except (ConfigError, ParseError, GridError, DomainError, KernelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
