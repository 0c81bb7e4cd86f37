"""Regenerate every figure preset: sum-rate curves plus the gain histogram.

    python scripts/reproduce_figures.py --out results --runs 1000 --workers 4
"""

import argparse
import sys

from hlisa.cli import main as cli
from hlisa.config import PRESETS


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--runs", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--presets", default=",".join(p for p in PRESETS if p != "fig4"))
    args = parser.parse_args()
    common = ["--out", args.out, "--runs", str(args.runs), "--seed", str(args.seed)]
    status = 0
    for name in args.presets.split(","):
        print(f"simulate {name}", flush=True)
        status = max(status, cli(["simulate", "--preset", name, "--plot", "--workers", str(args.workers)] + common))
    print("histogram fig4", flush=True)
    status = max(status, cli(["histogram", "--preset", "fig4", "--plot"] + common))
    return status


if __name__ == "__main__":
    sys.exit(main())
