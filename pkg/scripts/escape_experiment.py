#!/usr/bin/env python3
"""Monte Carlo saddle-escape experiment.

Runs many perturbed subgradient trials from a tiny ball around a saddle
anchor and reports how many leave the delta-ball, with the median escape
index.  Example:

    python scripts/escape_experiment.py --problem Z1 --trials 200 \
        --steps 100000 --gamma 0.7 --noise-r 0.1 --delta 0.5 --seed 1
"""

import argparse
import json

from saddlescape.diagnostics import escape_statistics
from saddlescape.problems import get_problem
from saddlescape.solvers import MappingKind, NoiseModel, StepSchedule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="Z1")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--gamma", type=float, default=0.7)
    ap.add_argument("--c1", type=float, default=0.1)
    ap.add_argument("--noise-r", type=float, default=0.1)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = get_problem(args.problem)
    stats = escape_statistics(
        p, MappingKind.SUBGRADIENT,
        StepSchedule(args.c1, args.c1, args.gamma),
        NoiseModel.uniform_ball(args.noise_r),
        delta=args.delta, trials=args.trials, K=args.steps, seed=args.seed)
    print(json.dumps({"problem": args.problem, **stats.to_dict()}, indent=2))


if __name__ == "__main__":
    main()
