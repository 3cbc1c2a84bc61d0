"""Long-running sweeps at full size: 16-site TFIM chain, 5x5 TFIM, 12-site BBC.

These take hours to days on one machine and are not part of the test suite.
Each sweep is resumable; rerun the same command to continue.

    python3 scripts/large_sweeps.py tfim16 --out runs --workers 8
"""

import argparse
import math
import sys
from pathlib import Path

import yaml

from phasesketch import cli

SWEEPS = {
    "tfim16": {
        "model": {"kind": "tfim-1d", "size": 16},
        "g_grid": {"min": 0.1, "max": 2.0, "count": 20},
        "p_grid": list(range(1, 20)),
        "n_restarts": 5,
    },
    "tfim5x5": {
        "model": {"kind": "tfim-2d", "size": [5, 5]},
        "g_grid": {"min": 1.0, "max": 5.0, "count": 17},
        "p_grid": list(range(1, 11)),
        "n_restarts": 3,
    },
    "bbc12": {
        "model": {"kind": "bbc", "size": 12},
        "g_grid": [round(k * math.pi / 20, 12) for k in range(-20, 20)],
        "p_grid": list(range(1, 11)),
        "n_restarts": 3,
    },
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", metavar="NAME", help=f"any of {', '.join(SWEEPS)} (default all)")
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--exact", action="store_true", help="also attach exact references")
    args = ap.parse_args(argv)
    unknown = set(args.names) - set(SWEEPS)
    if unknown:
        ap.error(f"unknown sweeps: {sorted(unknown)}")

    for name in args.names or SWEEPS:
        out = Path(args.out) / name
        out.mkdir(parents=True, exist_ok=True)
        cfg = out / "sweep.yaml"
        cfg.write_text(yaml.safe_dump({**SWEEPS[name], "output_dir": str(out)}))
        steps = [["run", "--config", str(cfg), "--resume", "--workers", str(args.workers)]]
        if args.exact:
            steps.append(["exact", "--config", str(cfg)])
        steps += [["analyze", "--records", str(out), "--normalize"], ["fit", "--records", str(out)],
                  ["report", "--records", str(out)]]
        for step in steps:
            rc = cli.main(["-v", *step])
            if rc:
                return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
