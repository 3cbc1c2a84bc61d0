"""Compute the acceptance sweeps ahead of a test run.

    python3 scripts/prerun_sweeps.py tfim12 ssh10
"""

import argparse
import logging
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from sweeps import SWEEPS, compute_seconds, get_sweep  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", default=list(SWEEPS))
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.names:
        t = time.time()
        _, recs = get_sweep(name, workers=args.workers)
        print(f"{name}: {len(recs)} records, {compute_seconds(recs):.0f} s compute, {time.time() - t:.0f} s this call")


if __name__ == "__main__":
    main()
