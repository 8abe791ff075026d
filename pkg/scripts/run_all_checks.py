"""Run every packaged verification suite and print a one-line summary each.

Equivalent to `heisvisc check --suite all` but with a per-suite progress
line and timing, which is friendlier for interactive use.  Exit code 0
iff every suite passes.
"""

import argparse
import sys
import time

from heisvisc.suites import SUITE_NAMES, report_json, run_suite


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--count", type=int, default=None,
                    help="override the per-suite sample count")
    ap.add_argument("--report", default=None, help="write the combined JSON report here")
    args = ap.parse_args(argv)

    combined = []
    all_ok = True
    for name in SUITE_NAMES:
        if name == "all":
            continue
        t0 = time.time()
        rep = run_suite(name, args.seed, count=args.count)
        elapsed = time.time() - t0
        all_ok = all_ok and rep.passed
        bad = [c.name for c in rep.checks if not c.passed]
        status = "ok" if rep.passed else f"FAILED {bad}"
        print(f"{name:11s} {len(rep.checks):2d} checks  {elapsed:5.1f}s  {status}")
        combined.append(rep)

    if args.report:
        full = run_suite("all", args.seed, count=args.count)
        with open(args.report, "w", newline="\n") as fh:
            fh.write(report_json(full))
        print(f"wrote {args.report}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
