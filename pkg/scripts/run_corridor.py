"""k sweep on the two-corridor map: does a larger bank recover the other route?

Usage: python3 scripts/run_corridor.py --seeds 20 --k 1 5 20
"""
import argparse

import numpy as np

from vecgr import experiment as ex
from vecgr import gridmap


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--map", default="data/maps/corridor.map")
    ap.add_argument("--scenario", default="data/scenarios/corridor.txt")
    ap.add_argument("--start", type=int, default=2)
    ap.add_argument("--goal", type=int, default=0)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 5])
    args = ap.parse_args(argv)
    grid = gridmap.load_map(args.map)
    pts = gridmap.load_scenario(args.scenario)
    ppv = {k: [] for k in args.k}
    mismatched = 0
    print("seed,k,ppv,acc,spr,truth_side,bank_sides")
    for seed in range(args.seeds):
        cfg = ex.ExperimentConfig(seed=seed, timing_repeats=1)
        for rec in ex.run_k_sweep(grid, pts, [(args.start, args.goal)], cfg, args.k):
            ppv[rec.k].append(rec.row.ppv)
            if rec.k == min(args.k):
                mismatched += rec.gt_side != rec.bank_sides[0]
            sides = "".join("+" if s > 0 else "-" for s in rec.bank_sides)
            print(f"{seed},{rec.k},{rec.row.ppv:.1f},{rec.row.acc:.1f},{rec.row.spr:.2f},"
                  f"{'+' if rec.gt_side > 0 else '-'},{sides}", flush=True)
    print(f"# agent in the other corridor than the first bank path: {mismatched}/{args.seeds}")
    for k in args.k:
        print(f"# k={k}: mean PPV {np.mean(ppv[k]):.1f}")


if __name__ == "__main__":
    main()
