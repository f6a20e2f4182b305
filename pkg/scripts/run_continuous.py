"""Continuous experiment over every ordered pair of scenario points.

Usage: python3 scripts/run_continuous.py --map data/maps/open.map --k 1 5 --seeds 0 1 2
Writes one CSV per (k, seed) and prints the summary table.
"""
import argparse
from dataclasses import replace
from pathlib import Path

from vecgr import experiment as ex
from vecgr import gridmap


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--map", default="data/maps/open.map")
    ap.add_argument("--scenario", help="fixed scenario file; default samples per seed")
    ap.add_argument("--points", type=int, default=8)
    ap.add_argument("--k", type=int, nargs="+", default=[1])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--max-problems", type=int)
    ap.add_argument("--outdir", default="results/continuous")
    args = ap.parse_args(argv)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = gridmap.load_map(args.map)
    base = ex.ExperimentConfig(map_path=args.map, scenario_path=args.scenario,
                               n_points=args.points, max_problems=args.max_problems)
    print("k,seed,problems,failed,ppv,acc,spr,pc,online_s,offline_s")
    for k in args.k:
        for seed in args.seeds:
            cfg = replace(base, k=k, seed=seed)
            res = ex.run_continuous_experiment(cfg, grid=grid)
            stem = outdir / f"k{k}_seed{seed}"
            ex.write_result(res, stem.with_suffix(".csv"), f"{stem}_points.csv")
            s = ex.summarize(res.rows)["all"]
            print(f"{k},{seed},{s['problems']},{s['failed']},{s['ppv']:.2f},{s['acc']:.2f},"
                  f"{s['spr']:.3f},{s['pc']:.1f},{s['online_s']:.2e},{s['offline_s']:.2f}",
                  flush=True)
            if res.online_planner_calls:
                print(f"warning: {res.online_planner_calls} online planner calls")


if __name__ == "__main__":
    main()
