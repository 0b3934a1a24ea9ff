"""Run the acceptance checks and print one PASS/FAIL line per criterion."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import CRITERIA, run_criterion  # noqa: E402


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("numbers", type=int, nargs="*", help="criteria to run (default: all)")
    args = p.parse_args()
    numbers = args.numbers or [c[0] for c in CRITERIA]
    ok = True
    for k in numbers:
        passed, line = run_criterion(k)
        print(line, flush=True)
        ok &= passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
