"""Median run time of each LISA variant as the receive array grows.

    python scripts/bench_scaling.py --runs 20 --out results/bench_scaling.csv
"""

import argparse
import csv

import numpy as np

from hlisa.config import ScenarioConfig
from hlisa.evaluation import benchmark

ALGS = ("LISA", "LC-LISA", "H-LISA", "LC-H-LISA")
MS_ARRAYS = ((1, 1), (2, 1), (2, 2), (4, 2), (4, 4))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--L", type=int, default=3)
    parser.add_argument("--out", default="bench_scaling.csv")
    args = parser.parse_args()
    rows = []
    for ms in MS_ARRAYS:
        cfg = ScenarioConfig(L=args.L, ms_array=ms, algorithms=ALGS)
        times = benchmark(cfg, 0.0, args.runs)
        for alg in ALGS:
            ms_median = float(np.median(times[alg]) * 1e3)
            rows.append((alg, cfg.n_bs, cfg.n_ms, cfg.K, cfg.L, ms_median))
            print(f"N_MS={cfg.n_ms:3d} {alg:10s} {ms_median:8.2f} ms")
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("algorithm", "n_bs", "n_ms", "k", "l", "median_ms"))
        writer.writerows(rows)


if __name__ == "__main__":
    main()
