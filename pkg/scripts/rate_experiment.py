#!/usr/bin/env python3
"""Distance-decay rate experiment.

Averages dist(x_k, M) and dist^2(x_k, M) over many trials of a perturbed
subgradient run and fits both decay exponents.  On sharp instances the
first power recovers -gamma while the squared distance sits at -2*gamma
(the iterate lives in an O(alpha_k) tube around the manifold).

    python scripts/rate_experiment.py --problem Z1 --gamma 0.7 \
        --trials 200 --steps 100000 --kmin 1000 --csv-out rates.csv
"""

import argparse
import math

import numpy as np

from saddlescape.diagnostics import fit_from_sums
from saddlescape.problems import get_problem
from saddlescape.solvers import (MappingKind, NoiseModel, StepSchedule,
                                 run_batch, sample_uniform_ball, x0_stream)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="Z1")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--gamma", type=float, default=0.7)
    ap.add_argument("--c1", type=float, default=0.1)
    ap.add_argument("--noise-r", type=float, default=0.1)
    ap.add_argument("--x0-radius", type=float, default=0.05)
    ap.add_argument("--kmin", type=int, default=1000)
    ap.add_argument("--delta", type=float, default=math.inf,
                    help="stopping-ball radius for the survival indicator")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--csv-out")
    args = ap.parse_args()

    p = get_problem(args.problem)
    x0s = np.stack([p.manifold.anchor +
                    sample_uniform_ball(x0_stream(args.seed, t), 1,
                                        p.dimension, args.x0_radius)[0]
                    for t in range(args.trials)])
    res = run_batch(p, MappingKind.SUBGRADIENT,
                    StepSchedule(args.c1, args.c1, args.gamma),
                    NoiseModel.uniform_ball(args.noise_r), x0s, args.steps,
                    args.seed, center=p.manifold.anchor, delta=args.delta)
    fit2 = fit_from_sums(res.sum_dist2, res.surviving, args.trials, args.kmin)
    fit1 = fit_from_sums(res.sum_dist ** 2, res.surviving, args.trials, args.kmin)
    print(f"problem={args.problem} gamma={args.gamma} trials={args.trials} "
          f"K={args.steps} kmin={args.kmin}")
    print(f"slope of log mean dist^2 : {fit2.slope:+.4f}  (r^2={fit2.r_squared:.4f})")
    print(f"slope of log mean dist   : {fit1.slope / 2:+.4f}")
    print(f"surviving at K           : {res.surviving[-1]}/{args.trials}")

    if args.csv_out:
        lines = ["k,mean_dist2,surviving_trials"]
        for i in range(args.steps):
            lines.append(f"{i + 1},{res.sum_dist2[i] / args.trials!r},"
                         f"{int(res.surviving[i])}")
        with open(args.csv_out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {args.csv_out}")


if __name__ == "__main__":
    main()
