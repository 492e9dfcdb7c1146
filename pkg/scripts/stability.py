"""Top-20 overlap and false positives as fewer variables are group centered."""
from __future__ import annotations

import argparse

import numpy as np

from gemgls.covmodel import KroneckerModel, MeanSpec, ar1_correlation, sample_matrix_variate, twin_pair_correlation
from gemgls.design import TwoGroupDesign
from gemgls.pipeline import PenaltyPolicy, stability_iteration


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--multiplier", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=404)
    args = ap.parse_args()
    design = TwoGroupDesign.contiguous(10, 10)
    model = KroneckerModel(ar1_correlation(args.m, 0.8), twin_pair_correlation(10, 10, seed=11))
    gamma = np.zeros(args.m)
    gamma[:10], gamma[10:20] = 1.5, 1.0
    mean = MeanSpec(np.zeros(args.m), gamma)
    schedule = [1280 // 2 ** i for i in range(8)]
    penalty = PenaltyPolicy("plugin", args.multiplier)
    tp, fp, ov = [], [], []
    for s in np.random.SeedSequence(args.seed).spawn(args.reps):
        x = sample_matrix_variate(mean, model, design, "gaussian", np.random.default_rng(s))
        r = stability_iteration(x, design, schedule, penalty, top=20, support=np.arange(20))
        tp.append(r.true_positives)
        fp.append(r.false_positives)
        ov.append(r.overlap)
    print("schedule", schedule)
    print("mean TP", np.round(np.mean(tp, axis=0), 2).tolist())
    print("mean FP", np.round(np.mean(fp, axis=0), 2).tolist())
    print("mean overlap\n", np.round(np.mean(ov, axis=0), 1))


if __name__ == "__main__":
    main()
