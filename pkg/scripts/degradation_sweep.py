"""Held-out IoU for clean, boundary-degraded and truncated labels over several seeds.

    python3 scripts/degradation_sweep.py --seeds 0 1 2 --n-train 1000
"""
import argparse

import numpy as np

from moveseg.benchmark import BenchmarkConfig, run_benchmark
from moveseg.datasetgen import DegradeParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--n-train", type=int, default=1000)
    ap.add_argument("--modes", nargs="+", default=["none", "boundary", "truncate"])
    args = ap.parse_args()

    print("mode\tseed\tlabel_iou\tnet_iou\tseconds")
    table = {}
    for mode in args.modes:
        for seed in args.seeds:
            r = run_benchmark(BenchmarkConfig(n_train=args.n_train, seed=seed,
                                              degrade=DegradeParams(mode, 5, 0.25)))
            table[mode, seed] = r.net_iou
            print(f"{mode}\t{seed}\t{r.label_iou:.4f}\t{r.net_iou:.4f}\t{r.seconds:.0f}", flush=True)
    for mode in args.modes:
        vals = [table[mode, s] for s in args.seeds]
        print(f"# {mode}: mean net IoU {np.mean(vals):.4f}")


if __name__ == "__main__":
    main()
