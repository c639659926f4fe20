"""Write the CSV data behind figures 1-5 into one directory."""

import argparse
import sys

from dpo_sim.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/figures")
    args = ap.parse_args()
    status = 0
    for number in range(1, 6):
        status |= cli_main(["figure", str(number), "--out", args.out])
    return status


if __name__ == "__main__":
    sys.exit(main())
