"""Command-line entry point.

Grammar: saddlescape <run|check-regularity|shadow|fit-rates|escape|accept>.
Every subcommand accepts --config pointing at a JSON file; explicit flags
override config values.  The exit code is zero only if all invoked checks
pass.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (distance_rate_fit, escape_statistics, shadow_summary)
from .harness import ExperimentConfig, acceptance_suite, run_experiment
from .problems import get_problem, make_zoo
from .regularity import (SampleLadder, Verdict, check_a, check_b,
                         check_strong_a, estimate_aiming, fit_sqrt_gap)
from .solvers import IterateTrace, NoiseModel, StepSchedule, run, stopping_time


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _merged(args: argparse.Namespace, config: dict, key: str, default=None):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    return config.get(key, default)


def _parse_x0(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    problem = _merged(args, config, "problem")
    if problem is None:
        print("error: --problem is required", file=sys.stderr)
        return 2
    c1 = float(_merged(args, config, "c1", 0.1))
    trials = int(_merged(args, config, "trials", 1))
    cfg = ExperimentConfig(
        problem=problem,
        mapping=_merged(args, config, "mapping", "subgradient"),
        c1=c1,
        c2=float(_merged(args, config, "c2", c1)),
        gamma=float(_merged(args, config, "gamma", 0.7)),
        noise_kind=_merged(args, config, "noise_kind", "uniform_ball"),
        noise_r=float(_merged(args, config, "noise_r", 0.1)),
        trials=trials,
        steps=int(_merged(args, config, "steps", 1000)),
        deltas=[float(d) for d in config.get("deltas", [0.5])],
        seed=int(_merged(args, config, "seed", 0)),
        out_dir=_merged(args, config, "out_dir", "runs/out"),
    )
    x0_arg = _merged(args, config, "x0")
    if isinstance(x0_arg, str):
        cfg.x0 = {"kind": "literal", "value": _parse_x0(x0_arg)}
    elif isinstance(x0_arg, list):
        cfg.x0 = {"kind": "literal", "value": [float(v) for v in x0_arg]}
    elif isinstance(x0_arg, dict):
        cfg.x0 = x0_arg
    cfg.validate()
    workers = _merged(args, config, "workers")
    if workers is not None:
        os.environ["SADDLESCAPE_WORKERS"] = str(int(workers))
    if trials == 1 and args.out:
        p = get_problem(cfg.problem)
        trace = run(p, cfg.mapping, cfg.schedule(), cfg.noise(),
                    cfg.initial_point(p, 0), cfg.steps, cfg.seed, 0)
        trace.to_jsonl(args.out)
        print(f"wrote {args.out} ({cfg.steps} steps)")
        return 0
    manifest = run_experiment(cfg)
    print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_check_regularity(args) -> int:
    config = _load_config(args.config)
    label = _merged(args, config, "problem")
    condition = _merged(args, config, "condition", "strong_a")
    levels = int(_merged(args, config, "radii", 8))
    samples = int(_merged(args, config, "samples", 128))
    seed = int(_merged(args, config, "seed", 0))
    p = get_problem(label)
    r0 = p.manifold.validity_radius / 2.0
    ladder = SampleLadder.dyadic(r0, levels, samples, seed)
    if condition == "aiming":
        mu_hat, report = estimate_aiming(p, ladder)
    elif condition == "a":
        report = check_a(p, ladder)
    elif condition == "strong_a":
        report = check_strong_a(p, ladder)
    elif condition in ("b_le", "b_eq", "b_ge"):
        report = check_b(p, condition.split("_")[1], ladder, strong=False)
    elif condition in ("strong_b_le", "strong_b_eq", "strong_b_ge"):
        report = check_b(p, condition.split("_")[2], ladder, strong=True)
    elif condition == "sqrt_gap":
        exponent = fit_sqrt_gap(p, ladder)
        _emit({"problem": label, "condition": "sqrt_gap", "exponent": exponent},
              args.out)
        return 0
    else:
        print(f"error: unknown condition {condition!r}", file=sys.stderr)
        return 2
    payload = {"problem": label, **report.to_dict()}
    _emit(payload, args.out)
    return 0 if report.verdict is not Verdict.INCONCLUSIVE else 1


def _cmd_shadow(args) -> int:
    config = _load_config(args.config)
    label = _merged(args, config, "problem")
    delta = float(_merged(args, config, "delta", 0.1))
    trace = IterateTrace.from_jsonl(_merged(args, config, "trace"))
    p = get_problem(label)
    summary = shadow_summary(trace, p, delta)
    _emit({"problem": label, **summary}, args.out)
    return 0 if summary["reconstruction_residual"] <= 1e-10 else 1


def _cmd_fit_rates(args) -> int:
    config = _load_config(args.config)
    label = _merged(args, config, "problem")
    pattern = _merged(args, config, "glob")
    k_min = int(_merged(args, config, "kmin", 1000))
    delta = float(_merged(args, config, "delta", math.inf))
    min_traces = int(_merged(args, config, "min_traces", 50))
    paths = sorted(globmod.glob(pattern))
    if not paths:
        print(f"error: no traces match {pattern!r}", file=sys.stderr)
        return 2
    p = get_problem(label)
    traces = (IterateTrace.from_jsonl(path) for path in paths)
    fit = distance_rate_fit(traces, p, k_min, delta=delta, min_traces=min_traces)
    payload = {"problem": label, "slope": fit.slope, "intercept": fit.intercept,
               "r_squared": fit.r_squared, "k_range": list(fit.k_range),
               "surviving_at_end": fit.surviving_at_end,
               "degenerate": fit.degenerate, "inconclusive": fit.inconclusive,
               "traces": len(paths)}
    _emit(payload, args.out)
    if args.csv_out:
        # re-read to dump the averaged table
        sums = None
        surviving = None
        n = 0
        K = None
        anchor = p.manifold.anchor
        for path in paths:
            tr = IterateTrace.from_jsonl(path)
            if K is None:
                K = tr.K
                sums = np.zeros(K)
                surviving = np.zeros(K, dtype=np.int64)
            tau = stopping_time(tr, anchor, delta, 1) if math.isfinite(delta) else math.inf
            alive = np.ones(K, dtype=bool)
            if math.isfinite(tau):
                alive[int(tau) - 1:] = False
            sums += np.where(alive, tr.dists[:K] ** 2, 0.0)
            surviving += alive
            n += 1
        lines = ["k,mean_dist2,surviving_trials"]
        for i in range(K):
            lines.append(f"{i + 1},{repr(sums[i] / n)},{int(surviving[i])}")
        Path(args.csv_out).write_text("\n".join(lines) + "\n")
    return 0 if not (fit.degenerate or fit.inconclusive) else 1


def _cmd_escape(args) -> int:
    config = _load_config(args.config)
    label = _merged(args, config, "problem")
    p = get_problem(label)
    schedule = StepSchedule(
        c1=float(_merged(args, config, "c1", 0.1)),
        c2=float(_merged(args, config, "c2", _merged(args, config, "c1", 0.1))),
        gamma=float(_merged(args, config, "gamma", 0.7)))
    if schedule.gamma >= 1.0:
        print("error: escape experiments need gamma in (1/2, 1)", file=sys.stderr)
        return 2
    noise = NoiseModel.uniform_ball(float(_merged(args, config, "noise_r", 0.1)))
    stats = escape_statistics(
        p, _merged(args, config, "mapping", "subgradient"), schedule, noise,
        delta=float(_merged(args, config, "delta", 0.5)),
        trials=int(_merged(args, config, "trials", 200)),
        K=int(_merged(args, config, "steps", 100_000)),
        seed=int(_merged(args, config, "seed", 0)))
    _emit({"problem": label, **stats.to_dict()}, args.out)
    return 0


def _cmd_accept(args) -> int:
    config = _load_config(args.config)
    tier = _merged(args, config, "tier", "full")
    out_dir = _merged(args, config, "out_dir")
    report = acceptance_suite(tier=tier, out_dir=out_dir)
    return 0 if report.all_passed else 1


def _cmd_zoo(args) -> int:
    for p in make_zoo():
        print(p.metadata_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saddlescape", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--out", help="write the JSON report here as well")

    sp = sub.add_parser("run", help="run trials and write traces")
    common(sp)
    sp.add_argument("--problem")
    sp.add_argument("--mapping", choices=["subgradient", "projected_subgradient",
                                          "proximal_gradient"])
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--c1", type=float)
    sp.add_argument("--c2", type=float)
    sp.add_argument("--noise-r", type=float, dest="noise_r")
    sp.add_argument("--noise-kind", choices=["uniform_ball", "zero"], dest="noise_kind")
    sp.add_argument("--x0", help="comma-separated start point")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--workers", type=int, help="trial worker cap "
                    "(also settable via SADDLESCAPE_WORKERS)")
    sp.set_defaults(fn=_cmd_run)

    sp = sub.add_parser("check-regularity", help="estimate one compatibility condition")
    common(sp)
    sp.add_argument("--problem")
    sp.add_argument("--condition",
                    choices=["a", "strong_a", "b_le", "b_eq", "b_ge",
                             "strong_b_le", "strong_b_eq", "strong_b_ge",
                             "aiming", "sqrt_gap"])
    sp.add_argument("--radii", type=int, help="number of dyadic shells")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=_cmd_check_regularity)

    sp = sub.add_parser("shadow", help="shadow-sequence diagnostics for a trace")
    common(sp)
    sp.add_argument("--trace")
    sp.add_argument("--problem")
    sp.add_argument("--delta", type=float)
    sp.set_defaults(fn=_cmd_shadow)

    sp = sub.add_parser("fit-rates", help="distance-decay fit over saved traces")
    common(sp)
    sp.add_argument("--glob")
    sp.add_argument("--problem")
    sp.add_argument("--kmin", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--min-traces", type=int, dest="min_traces")
    sp.add_argument("--csv-out", dest="csv_out")
    sp.set_defaults(fn=_cmd_fit_rates)

    sp = sub.add_parser("escape", help="Monte Carlo escape statistics")
    common(sp)
    sp.add_argument("--problem")
    sp.add_argument("--mapping")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--c1", type=float)
    sp.add_argument("--c2", type=float)
    sp.add_argument("--noise-r", type=float, dest="noise_r")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=_cmd_escape)

    sp = sub.add_parser("accept", help="run the acceptance suite")
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--tier", choices=["fast", "full"])
    sp.add_argument("--out-dir", dest="out_dir")
    sp.set_defaults(fn=_cmd_accept)

    sp = sub.add_parser("zoo", help="list the problem zoo metadata")
    sp.set_defaults(fn=_cmd_zoo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
