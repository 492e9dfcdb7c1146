"""Print the structure metrics for the AR1 and star-block covariance rows."""
from __future__ import annotations

import argparse

from gemgls.covmodel import ar1_correlation, star_block_correlation
from gemgls.evaluation import structure_metrics

KEYS = ("rho2", "fro_over_trace", "inv_corr_l1_off", "sd_gls", "sd_ratio")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rhos", default="0.2,0.4,0.6,0.8")
    args = ap.parse_args()
    print("structure,n," + ",".join(KEYS))
    for n, blocks in ((80, 4), (40, 2)):
        rows = [(f"AR1({r})", ar1_correlation(n, float(r))) for r in args.rhos.split(",")]
        rows.append((f"StarBlock({blocks};20)", star_block_correlation(blocks, 20, 0.5)))
        for label, b in rows:
            met = structure_metrics(b)
            print(f"{label},{n}," + ",".join(f"{met[k]:.2f}" for k in KEYS))


if __name__ == "__main__":
    main()
