#!/usr/bin/env python3
"""Sweep the condition checkers over the whole problem zoo and print a table.

    python scripts/regularity_sweep.py --samples 128 --levels 8 --seed 7
"""

import argparse
import math

from saddlescape.problems import make_zoo
from saddlescape.regularity import (SampleLadder, check_b, check_strong_a,
                                    estimate_aiming, fit_sqrt_gap)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=128)
    ap.add_argument("--levels", type=int, default=8)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    header = f"{'label':6} {'strong_a':14} {'b_eq':14} {'strong_b_eq':14} " \
             f"{'aiming mu':12} {'gap exp':8}"
    print(header)
    print("-" * len(header))
    for p in make_zoo():
        ladder = SampleLadder.default_for(p, levels=args.levels,
                                          samples_per_radius=args.samples,
                                          seed=args.seed)
        sa = check_strong_a(p, ladder).verdict.value
        beq = check_b(p, "eq", ladder).verdict.value
        sbeq = check_b(p, "eq", ladder, strong=True).verdict.value
        mu, _ = estimate_aiming(p, ladder)
        mu_s = f"{mu:.3f}" if math.isfinite(mu) else "n/a"
        gap = f"{fit_sqrt_gap(p, ladder):.2f}" if p.kind == "set" else "-"
        print(f"{p.label:6} {sa:14} {beq:14} {sbeq:14} {mu_s:12} {gap:8}")


if __name__ == "__main__":
    main()
