"""Discrete experiment over the generated STRIPS problems for several k.

Usage: python3 scripts/run_discrete.py --k 1 2 5 --domains blocksworld grid gripper
"""
import argparse
from pathlib import Path

from vecgr import experiment as ex


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="data/discrete")
    ap.add_argument("--domains", nargs="+", default=["blocksworld", "grid", "gripper"])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 5])
    ap.add_argument("--optimal-only", action="store_true")
    ap.add_argument("--outdir", default="results/discrete")
    args = ap.parse_args(argv)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    print("domain,k,fraction,problems,failed,ppv,acc,spr,pc")
    for domain in args.domains:
        paths = tuple(str(p) for p in sorted((Path(args.root) / domain).glob("p*")))
        for k in args.k:
            cfg = ex.ExperimentConfig(mode="discrete", problem_paths=paths, k=k,
                                      optimal_only=args.optimal_only)
            res = ex.run_discrete_experiment(cfg)
            ex.write_result(res, outdir / f"{domain}_k{k}.csv")
            for frac, s in ex.summarize(res.rows, group_by_fraction=True).items():
                print(f"{domain},{k},{frac},{s['problems']},{s['failed']},{s['ppv']:.2f},"
                      f"{s['acc']:.2f},{s['spr']:.3f},{s['pc']:.1f}", flush=True)


if __name__ == "__main__":
    main()
