"""RMSE of the mean difference and relative error of B^-1 for ER and star-block B."""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from gemgls.evaluation import SimConfig, run_simulation


def config(b_kind: str, n: int, m: int, reps: int, seed: int) -> SimConfig:
    b_spec = ({"kind": "erdos_renyi", "n": n, "d": n, "seed": 7} if b_kind == "er"
              else {"kind": "star_block", "n_blocks": n // 10, "block_size": 10, "rho": 0.5})
    return SimConfig(
        a_spec={"kind": "ar1", "n": m, "rho": 0.8}, b_spec=b_spec,
        mean={"kind": "sparse", "d0": 10, "effect": 3.0}, assignment="random",
        estimators=["ols", "alg1", "alg2", "oracle_gls"], replications=reps, seed=seed,
        penalty_kind="oracle", penalty_grid=[0.5], alg2_stage1_multiplier=0.5,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=101)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    for b_kind in ("er", "starblock"):
        for n in (40, 80):
            t0 = time.time()
            rep = run_simulation(config(b_kind, n, args.m, args.reps, args.seed), workers=args.workers)
            print(f"{b_kind} n={n} ({time.time() - t0:.0f}s, failures {rep.failures})")
            for row in rep.summary():
                if row["metric"] in ("rmse", "rel_fro"):
                    print(f"  {row['estimator']:<11} {row['metric']:<8} {row['mean']:.4f} +- {row['se']:.4f}")
            if args.out:
                rep.write(args.out / f"{b_kind}_n{n}")


if __name__ == "__main__":
    main()
