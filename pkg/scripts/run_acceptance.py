"""Run every acceptance criterion, print one line each and write a CSV of all checks."""

import argparse
import sys
import time
from pathlib import Path

from dpo_sim.io import write_csv
from dpo_sim.validation import acceptance_criteria


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/acceptance.csv")
    ap.add_argument("--only", nargs="*", help="criterion keys to run")
    args = ap.parse_args()

    rows, status = [], 0
    for crit in acceptance_criteria():
        if args.only and crit.key not in args.only:
            continue
        start = time.perf_counter()
        results = crit.run()
        elapsed = time.perf_counter() - start
        ok = all(r.passed for r in results) and elapsed < crit.budget_seconds
        status |= not ok
        print(f"{'PASS' if ok else 'FAIL'} [{crit.key}] {crit.title} ({elapsed:.1f}s, budget {crit.budget_seconds:.0f}s)")
        for r in results:
            print("    " + r.line())
            rows.append([crit.key, r.name, "pass" if r.passed else "fail", r.measured, r.target, r.tolerance, r.detail])
    write_csv(Path(args.out), ["criterion", "check", "status", "measured", "target", "tolerance", "detail"], rows)
    return status


if __name__ == "__main__":
    sys.exit(main())
