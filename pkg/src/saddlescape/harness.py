"""Experiment orchestration: configs, parallel trial execution, artifact
persistence, and the acceptance-suite driver.

Artifacts are plain files: JSONL traces (one per trial), JSON reports, CSV
summaries, and a manifest tying them together.  Summaries are written by the
orchestrator alone, in trial order, so identical configs produce identical
bytes regardless of worker scheduling.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .problems import ProblemInstance, get_problem
from .regularity import SampleLadder, estimate_aiming
from .solvers import (MappingKind, NoiseKind, NoiseModel, StepSchedule,
                      encode_stopping_time, run, stopping_time, x0_stream,
                      sample_uniform_ball)

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "run_experiment",
    "acceptance_suite",
    "worker_count",
    "WORKERS_ENV",
]

WORKERS_ENV = "SADDLESCAPE_WORKERS"


def worker_count(trials: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be positive")
    else:
        n = os.cpu_count() or 1
    return max(1, min(n, trials))


def _float_repr(x: float) -> str:
    return repr(float(x))


@dataclass
class ExperimentConfig:
    problem: str
    mapping: str = "subgradient"
    c1: float = 0.1
    c2: float = 0.1
    gamma: float = 0.7
    noise_kind: str = "uniform_ball"
    noise_r: float = 0.1
    x0: dict = field(default_factory=lambda: {"kind": "uniform_ball", "radius": 0.05})
    trials: int = 1
    steps: int = 1000
    deltas: list[float] = field(default_factory=lambda: [0.5])
    seed: int = 0
    out_dir: str = "runs/out"

    def validate(self) -> "ExperimentConfig":
        self.schedule()  # raises on a bad (c1, c2, gamma) triple
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.steps < 10:
            raise ValueError("steps must be at least 10")
        if self.mapping not in [m.value for m in MappingKind]:
            raise ValueError(f"unknown mapping {self.mapping!r}")
        if self.noise_kind not in [n.value for n in NoiseKind]:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if not self.deltas or any(d <= 0 for d in self.deltas):
            raise ValueError("deltas must be positive")
        if self.x0.get("kind") not in ("literal", "uniform_ball"):
            raise ValueError("x0 kind must be 'literal' or 'uniform_ball'")
        get_problem(self.problem)
        return self

    def schedule(self) -> StepSchedule:
        return StepSchedule(c1=self.c1, c2=self.c2, gamma=self.gamma)

    def noise(self) -> NoiseModel:
        if self.noise_kind == "zero":
            return NoiseModel.zero()
        return NoiseModel.uniform_ball(self.noise_r)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig(**d)
        cfg.deltas = [float(v) for v in cfg.deltas]
        return cfg

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(text))

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()

    def initial_point(self, p: ProblemInstance, trial: int) -> np.ndarray:
        if self.x0["kind"] == "literal":
            return np.asarray(self.x0["value"], dtype=float)
        radius = float(self.x0["radius"])
        center = p.manifold.anchor if p.manifold is not None else np.zeros(p.dimension)
        return center + sample_uniform_ball(x0_stream(self.seed, trial), 1,
                                            p.dimension, radius)[0]


@dataclass
class RunManifest:
    config_hash: str
    trial_seeds: list[list[int]]
    artifacts: list[str]
    tool_version: str
    wall_clock_s: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def schedule_warnings(p: ProblemInstance, cfg: ExperimentConfig) -> list[str]:
    """Hypothesis checks surfaced as warnings: gamma = 1 needs c1 >= 32/mu."""
    warnings = []
    if cfg.gamma == 1.0 and p.manifold is not None:
        ladder = SampleLadder.default_for(p, levels=4, samples_per_radius=32,
                                          seed=cfg.seed)
        mu_hat, _ = estimate_aiming(p, ladder)
        if math.isfinite(mu_hat) and mu_hat > 0 and cfg.c1 < 32.0 / mu_hat:
            warnings.append(
                f"gamma = 1 with c1 = {cfg.c1} below 32/mu_hat = {32.0 / mu_hat:.3g}; "
                "the distance-decay guarantees need a larger c1")
    return warnings


def _run_one_trial(cfg_dict: dict, trial: int) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    p = get_problem(cfg.problem)
    x0 = cfg.initial_point(p, trial)
    trace = run(p, cfg.mapping, cfg.schedule(), cfg.noise(), x0, cfg.steps,
                cfg.seed, trial)
    out = Path(cfg.out_dir)
    trace_path = out / f"trace_{trial:04d}.jsonl"
    trace.to_jsonl(trace_path)
    anchor = p.manifold.anchor if p.manifold is not None else np.zeros(p.dimension)
    row = {"trial": trial, "seed": cfg.seed,
           "final_dist_to_anchor": float(np.linalg.norm(trace.xs[-1] - anchor)),
           "final_f": float(trace.fvals[-1]),
           "artifact": trace_path.name}
    for delta in cfg.deltas:
        tau = stopping_time(trace, anchor, delta, 1)
        row[f"tau_delta_{delta:g}"] = encode_stopping_time(tau, cfg.steps)
    if trace.dists is not None:
        row["final_dist_to_manifold"] = float(trace.dists[-1])
    return row


def _summary_csv(rows: list[dict], path: Path) -> None:
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(_float_repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Execute the configured trials, write traces/diagnostics/summary, and
    return the manifest describing every artifact."""
    config.validate()
    p = get_problem(config.problem)
    start = time.monotonic()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings = schedule_warnings(p, config)

    trials = list(range(config.trials))
    cfg_dict = config.to_dict()
    workers = worker_count(config.trials)
    if workers == 1 or config.trials == 1:
        rows = [_run_one_trial(cfg_dict, t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one_trial, [cfg_dict] * len(trials), trials))
    rows.sort(key=lambda r: r["trial"])

    summary_path = out / "summary.csv"
    _summary_csv(rows, summary_path)

    report = {
        "problem": config.problem,
        "mapping": config.mapping,
        "trials": config.trials,
        "steps": config.steps,
        "escaped": {f"{d:g}": sum(1 for r in rows if r[f"tau_delta_{d:g}"] <= config.steps)
                    for d in config.deltas},
        "mean_final_dist_to_anchor": float(np.mean([r["final_dist_to_anchor"] for r in rows])),
        "warnings": warnings,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    config_path = out / "config.json"
    config_path.write_text(config.to_json() + "\n")

    artifacts = [r["artifact"] for r in rows] + [summary_path.name,
                                                 report_path.name,
                                                 config_path.name]
    manifest = RunManifest(
        config_hash=config.config_hash(),
        trial_seeds=[[config.seed, t] for t in trials],
        artifacts=artifacts,
        tool_version=__version__,
        wall_clock_s=time.monotonic() - start,
        warnings=warnings)
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# acceptance suite
# ---------------------------------------------------------------------------


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    measured: dict
    requirement: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        meas = ", ".join(f"{k}={v}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.cid}: {self.name} ({meas}) requires {self.requirement}"


@dataclass
class AcceptanceReport:
    tier: str
    results: list[CriterionResult]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"tier": self.tier, "all_passed": self.all_passed,
                "results": [dataclasses.asdict(r) for r in self.results]}


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def acceptance_suite(tier: str = "full", out_dir: Optional[str] = None,
                     echo=print) -> AcceptanceReport:
    """Run the acceptance criteria and emit one pass/fail line per criterion.

    ``full`` runs every criterion at its stated scale and tolerance; ``fast``
    shrinks the Monte Carlo sizes and widens tolerances for a quick signal.
    """
    from . import acceptance
    if tier not in ("fast", "full"):
        raise ValueError("tier must be 'fast' or 'full'")
    results = acceptance.run_all(tier)
    for r in results:
        echo(r.line())
    report = AcceptanceReport(tier=tier, results=results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance_report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        rows = [{"criterion": r.cid, "name": r.name,
                 "passed": int(r.passed),
                 **{f"measured_{k}": v for k, v in r.measured.items()}}
                for r in results]
        cols: list[str] = []
        for row in rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join(_float_repr(row[c]) if isinstance(row.get(c), float)
                                  else str(row.get(c, "")) for c in cols))
        (out / "acceptance_summary.csv").write_text("\n".join(lines) + "\n")
    return report
