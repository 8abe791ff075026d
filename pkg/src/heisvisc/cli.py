"""Command-line front end.

Subcommands: gauge, group, envelope, classify, check, compare, solve.
Results print as single JSON lines on stdout (sorted keys); file outputs
use the deterministic formats from :mod:`heisvisc.gridio`, so a command
rerun with the same inputs and seed is byte-identical.

Exit codes follow one contract everywhere: 0 success, 1 property or
convergence failure, 2 usage, I/O, or schema error.  A JSON config file
passed with --config supplies flag defaults; flags given on the command
line win.  HEISVISC_THREADS caps the worker pool used by `check --suite
all`.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .comparison import touching_harness
from .core import Point, dist, gauge, group_inv, group_mul
from .envelopes import (
    check_semiconvexity,
    check_witness_bound,
    lower_envelope,
    upper_envelope,
)
from .gridio import (
    load_problem,
    read_grid_csv,
    write_classification_csv,
    write_grid_csv,
    write_residuals_csv,
    write_witness_csv,
)
from .perron import solve
from .suites import SUITE_NAMES, report_json, run_suite
from .viscosity import classify_grid

__all__ = ["main", "build_parser"]


def _print_json(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _parse_point(text, n=None):
    try:
        coords = np.array([float(p) for p in text.split(",")])
    except ValueError as e:
        raise ValueError(f"malformed point {text!r}: {e}") from None
    if coords.size < 3 or coords.size % 2 == 0:
        raise ValueError(f"point needs 2n+1 coordinates, got {coords.size}")
    if n is not None and coords.size != 2 * n + 1:
        raise ValueError(f"point {text!r} has {coords.size} coordinates, expected {2 * n + 1}")
    return Point.from_coords(coords)


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gauge(args):
    p = _parse_point(args.point, args.n)
    _print_json({"point": list(p.coords()), "gauge": gauge(p)})
    return 0


def cmd_group(args):
    a = _parse_point(args.a)
    if args.op == "inv":
        _print_json({"op": "inv", "result": list(group_inv(a).coords())})
        return 0
    if args.b is None:
        raise ValueError(f"group {args.op} needs --b")
    b = _parse_point(args.b, n=a.n)
    if args.op == "mul":
        _print_json({"op": "mul", "result": list(group_mul(a, b).coords())})
    else:
        _print_json({"op": "dist", "result": dist(a, b)})
    return 0


def cmd_envelope(args):
    if args.eps <= 0:
        raise ValueError("--eps must be positive")
    v = read_grid_csv(args.input)
    build = upper_envelope if args.mode == "upper" else lower_envelope
    r = build(v, args.eps)
    out = _out_dir(args)
    write_grid_csv(r.out, out / f"{args.prefix}_envelope.csv")
    write_witness_csv(r, out / f"{args.prefix}_witness.csv")

    wit = check_witness_bound(r, v)
    gap = r.out.values - v.values if args.mode == "upper" else v.values - r.out.values
    semi = check_semiconvexity(r)
    report = {
        "input": str(args.input),
        "eps": args.eps,
        "mode": args.mode,
        "checks": {
            "witness_identity": {
                "passed": bool(wit.passed),
                "identity_violations": int(wit.identity_violations),
                "reach_violations": int(wit.reach_violations),
            },
            "dominates_source": {
                "passed": bool(gap.min() >= 0.0),
                "worst": float(gap.min()),
            },
            "semiconvex_bound": {
                "passed": bool(semi.passed),
                "violations": int(semi.violations),
            },
        },
    }
    report["passed"] = all(c["passed"] for c in report["checks"].values())
    (out / f"{args.prefix}_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", newline="\n"
    )
    _print_json({"passed": report["passed"], "out_dir": str(out)})
    return 0 if report["passed"] else 1


def cmd_classify(args):
    prob = load_problem(args.problem)
    out = _out_dir(args)
    summary = {}
    ok = True
    for tag, g, side, bad in (
        ("sub", prob.sub, "sub", "SubViolated"),
        ("sup", prob.sup, "super", "SuperViolated"),
    ):
        c = classify_grid(g, prob.spec, prob.cone, side=side)
        write_classification_csv(c, out / f"{tag}_classification.csv")
        summary[tag] = {"counts": {k: int(v) for k, v in c.counts.items()}}
        ok = ok and c.count(bad) == 0
    report = {"problem": str(args.problem), "passed": ok, "sides": summary}
    (out / "classify_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", newline="\n"
    )
    _print_json({"passed": ok, "out_dir": str(out)})
    return 0 if ok else 1


def cmd_check(args):
    cap = max(1, int(os.environ.get("HEISVISC_THREADS", "1")))
    if args.suite == "all" and cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            report = run_suite(args.suite, args.seed, count=args.count,
                               tamper=args.tamper, pool=pool)
    else:
        report = run_suite(args.suite, args.seed, count=args.count, tamper=args.tamper)
    text = report_json(report)
    if args.report is not None:
        Path(args.report).write_text(text, newline="\n")
    sys.stdout.write(text)
    return 0 if report.passed else 1


def cmd_compare(args):
    prob = load_problem(args.problem)
    rep = touching_harness(prob.sup, prob.sub, prob.spec, prob.cone)
    sys.stdout.write(rep.to_json() + "\n")
    if args.out_dir is not None:
        out = _out_dir(args)
        (out / "compare_report.json").write_text(rep.to_json() + "\n", newline="\n")
    return 0 if rep.verdict == "CONSISTENT" else 1


def cmd_solve(args):
    prob = load_problem(args.problem)
    dt = "auto" if args.dt == "auto" else float(args.dt)
    out = _out_dir(args)
    try:
        res = solve(prob, dt=dt, tol=args.tol, max_iter=args.max_iter, start=args.start)
    except ArithmeticError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    write_grid_csv(res.u, out / "solution.csv")
    write_residuals_csv(res.residuals, out / "residuals.csv")
    report = {
        "problem": str(args.problem),
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "final_residual": float(res.final_residual),
        "dt": float(res.dt),
        "start": res.start,
    }
    (out / "solve_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", newline="\n"
    )
    _print_json({"converged": report["converged"], "iterations": report["iterations"],
                 "out_dir": str(out)})
    return 0 if res.converged else 1


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="heisvisc",
        description="Grid toolkit for fully nonlinear equations in the first Heisenberg groups.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", default=None,
                       help="JSON file with default flag values (flags win)")
        return p

    p = add("gauge", cmd_gauge, "homogeneous gauge of a point")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--point", required=True, help="comma-separated coordinates")

    p = add("group", cmd_group, "group operations on points")
    p.add_argument("op", choices=("mul", "inv", "dist"))
    p.add_argument("--a", required=True)
    p.add_argument("--b", default=None)

    p = add("envelope", cmd_envelope, "quartic-kernel envelope of a grid CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--mode", choices=("upper", "lower"), default="upper")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="field")

    p = add("classify", cmd_classify, "classify a problem's bracket pair")
    p.add_argument("--problem", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("check", cmd_check, "run a packaged verification suite")
    p.add_argument("--suite", choices=SUITE_NAMES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--tamper", action="store_true",
                   help="swap the deliberate non-cone into the cones suite")
    p.add_argument("--report", default=None, help="also write the JSON report here")

    p = add("compare", cmd_compare, "touching harness for a problem's bracket pair")
    p.add_argument("--problem", required=True)
    p.add_argument("--out-dir", default=None)

    p = add("solve", cmd_solve, "bracketed fixed-point solve of a problem JSON")
    p.add_argument("--problem", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dt", default="auto")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=60000)
    p.add_argument("--start", choices=("sub", "super"), default="sub")

    return parser


def _apply_config(args, argv):
    if getattr(args, "config", None) is None:
        return
    data = json.loads(Path(args.config).read_text())
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    for key, value in data.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"config key {key!r} is not a flag of this command")
        if f"--{key.replace('_', '-')}" in given:
            continue
        setattr(args, attr, value)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, argv)
        return args.fn(args)
    except ArithmeticError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
