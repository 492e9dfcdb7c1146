"""Ratio of estimated to true design effect across penalty multipliers."""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from gemgls.evaluation import SimConfig, run_simulation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--grid", default="0.01,0.05,0.1,0.5")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=202)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    grid = [float(g) for g in args.grid.split(",")]
    cfg = SimConfig(
        a_spec={"kind": "ar1", "n": args.m, "rho": 0.8},
        b_spec={"kind": "erdos_renyi", "n": args.n, "d": args.n, "seed": 7},
        mean={"kind": "sparse", "d0": 10, "effect": 2.0}, assignment="random",
        estimators=["alg1", "alg2"], replications=args.reps, seed=args.seed,
        penalty_kind="oracle", penalty_grid=grid, alg2_stage1_multiplier=0.1,
        alg2_threshold="top_k", alg2_top_k=10,
    )
    rep = run_simulation(cfg, workers=args.workers)
    print("estimator,multiplier,median,q25,q75")
    for est in ("alg1", "alg2"):
        for f in grid:
            v = rep.values(est, "de_ratio", f)
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            print(f"{est},{f},{med:.3f},{q1:.3f},{q3:.3f}")
    if args.out:
        rep.write(args.out)


if __name__ == "__main__":
    main()
