"""Generalized gradient mappings and the perturbed stochastic iteration.

The iteration is x_{k+1} = x_k - alpha_k * G(alpha_k, x_k, nu_k) for k >= 1
with x_1 = x0.  Three mappings are provided: the plain subgradient selection
plus noise, the projected variant routed through the constraint projection,
and the proximal variant routed through the closed-form prox.

Randomness is counter-based (Philox) and keyed by (seed, purpose, trial), so
independent trials can run in any order, serial or parallel, and replay
bit-identically.  Noise is drawn in fixed-size chunks; the chunk layout is
part of the reproducibility contract and must not change.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
from numpy.random import Generator, Philox

from .problems import ProblemInstance

__all__ = [
    "StepSchedule",
    "NoiseModel",
    "MappingKind",
    "GradientMapping",
    "make_mapping",
    "apply_subgradient_mapping",
    "apply_projected_mapping",
    "apply_proximal_mapping",
    "IterateTrace",
    "run",
    "run_batch",
    "BatchResult",
    "stopping_time",
    "encode_stopping_time",
    "DomainEscapeError",
    "stream",
    "sample_uniform_ball",
    "NOISE_CHUNK",
]

NOISE_CHUNK = 4096

# stream purposes; part of the replay contract
_PURPOSE_NOISE = 0
_PURPOSE_X0 = 1
_PURPOSE_SHELL = 2


def stream(seed: int, purpose: int, index: int) -> Generator:
    """Independent Philox stream keyed by (seed, purpose, index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(((purpose & 0xFFFF) << 48) | (index & 0xFFFFFFFFFFFF))],
                   dtype=np.uint64)
    return Generator(Philox(key=key))


def noise_stream(seed: int, trial: int) -> Generator:
    return stream(seed, _PURPOSE_NOISE, trial)


def x0_stream(seed: int, trial: int) -> Generator:
    return stream(seed, _PURPOSE_X0, trial)


def shell_stream(seed: int, shell: int) -> Generator:
    return stream(seed, _PURPOSE_SHELL, shell)


def sample_uniform_ball(gen: Generator, n: int, d: int, radius: float) -> np.ndarray:
    """Exact uniform law on the radius-r ball: direction times radius*U^(1/d)."""
    z = gen.standard_normal((n, d))
    u = gen.random(n)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return radius * (u ** (1.0 / d))[:, None] * z / norms


class DomainEscapeError(RuntimeError):
    """Raised when the plain subgradient iteration leaves the domain."""

    def __init__(self, k: int, x: np.ndarray):
        super().__init__(f"iterate left the objective domain at step k={k}: x={x.tolist()}")
        self.k = k
        self.x = x


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying steps alpha_k = c1 * k^(-gamma), gamma in (1/2, 1]."""

    c1: float
    c2: float
    gamma: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 >= self.c1):
            raise ValueError("require 0 < c1 <= c2")
        if not (0.5 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (1/2, 1]")

    def step(self, k: int) -> float:
        return self.c1 * k ** (-self.gamma)

    def steps(self, ks: np.ndarray) -> np.ndarray:
        return self.c1 * np.asarray(ks, dtype=float) ** (-self.gamma)


class NoiseKind(enum.Enum):
    UNIFORM_BALL = "uniform_ball"
    ZERO = "zero"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.ZERO
    r: float = 0.0

    def __post_init__(self):
        if self.kind is NoiseKind.UNIFORM_BALL and not self.r > 0:
            raise ValueError("uniform_ball noise needs a positive radius")

    @staticmethod
    def uniform_ball(r: float) -> "NoiseModel":
        return NoiseModel(NoiseKind.UNIFORM_BALL, r)

    @staticmethod
    def zero() -> "NoiseModel":
        return NoiseModel(NoiseKind.ZERO, 0.0)

    def chunk(self, gen: Generator, n: int, d: int) -> np.ndarray:
        if self.kind is NoiseKind.ZERO:
            return np.zeros((n, d))
        return sample_uniform_ball(gen, n, d, self.r)


def _noise_blocks(model: NoiseModel, gen: Generator, K: int, d: int) -> Iterator[np.ndarray]:
    """Noise for steps 1..K in NOISE_CHUNK blocks; fixed draw layout."""
    done = 0
    while done < K:
        m = min(NOISE_CHUNK, K - done)
        yield model.chunk(gen, m, d)
        done += m


class MappingKind(enum.Enum):
    SUBGRADIENT = "subgradient"
    PROJECTED_SUBGRADIENT = "projected_subgradient"
    PROXIMAL_GRADIENT = "proximal_gradient"


def apply_subgradient_mapping(p: ProblemInstance, alpha: float, x, nu) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not bool(np.all(p.objective.in_domain(x))):
        raise DomainEscapeError(0, x)
    return np.asarray(p.objective.subgrad(x), dtype=float) + np.asarray(nu, dtype=float)


def apply_projected_mapping(p: ProblemInstance, alpha: float, x, nu) -> np.ndarray:
    proj = p.objective.project_constraint
    if proj is None:
        raise ValueError(f"{p.label} exposes no constraint projection")
    x = np.asarray(x, dtype=float)
    if not bool(np.all(p.objective.in_domain(x))):
        raise DomainEscapeError(0, x)
    v = np.asarray(p.objective.subgrad(x), dtype=float) + np.asarray(nu, dtype=float)
    target = proj(x - alpha * v)
    return (x - np.asarray(target, dtype=float)) / alpha


def apply_proximal_mapping(p: ProblemInstance, alpha: float, x, nu) -> np.ndarray:
    if p.objective.prox is None or p.objective.smooth_grad is None:
        raise ValueError(f"{p.label} exposes no prox/smooth-gradient pair")
    x = np.asarray(x, dtype=float)
    v = np.asarray(p.objective.smooth_grad(x), dtype=float) + np.asarray(nu, dtype=float)
    target = np.asarray(p.objective.prox(x - alpha * v, alpha), dtype=float)
    return (x - target) / alpha


@dataclass(frozen=True)
class GradientMapping:
    kind: MappingKind
    apply: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    # set when the underlying oracles broadcast over a batch axis
    batch_capable: bool = False


def make_mapping(p: ProblemInstance, kind: MappingKind | str) -> GradientMapping:
    kind = MappingKind(kind) if not isinstance(kind, MappingKind) else kind
    if kind is MappingKind.SUBGRADIENT:
        return GradientMapping(kind, lambda a, x, nu: apply_subgradient_mapping(p, a, x, nu),
                               batch_capable=p.kind == "function")
    if kind is MappingKind.PROJECTED_SUBGRADIENT:
        if p.objective.project_constraint is None:
            raise ValueError(f"{p.label} has no constraint projection")
        return GradientMapping(kind, lambda a, x, nu: apply_projected_mapping(p, a, x, nu))
    if kind is MappingKind.PROXIMAL_GRADIENT:
        if p.objective.prox is None or p.objective.smooth_grad is None:
            raise ValueError(f"{p.label} has no prox/smooth-gradient pair")
        return GradientMapping(kind, lambda a, x, nu: apply_proximal_mapping(p, a, x, nu),
                               batch_capable=True)
    raise ValueError(f"unknown mapping kind {kind}")


@dataclass
class IterateTrace:
    """Dense record of one run: x_1..x_{K+1}, per-step noise, mapping output,
    distance to the manifold, and objective value."""

    xs: np.ndarray          # (K+1, d); xs[k-1] = x_k
    nus: np.ndarray         # (K, d)
    gs: np.ndarray          # (K, d)
    dists: Optional[np.ndarray]  # (K+1,) or None when there is no manifold
    fvals: np.ndarray       # (K+1,)
    seed: int
    trial: int
    config: dict

    @property
    def K(self) -> int:
        return self.gs.shape[0]

    def alphas(self) -> np.ndarray:
        sched = self.config["schedule"]
        return sched["c1"] * np.arange(1, self.K + 1, dtype=float) ** (-sched["gamma"])

    def records(self):
        """Yield (k, x_k, nu_k, g_k, dist_k, f_k) for k = 1..K."""
        for i in range(self.K):
            yield (i + 1, self.xs[i], self.nus[i], self.gs[i],
                   None if self.dists is None else float(self.dists[i]),
                   float(self.fvals[i]))

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            meta = {"type": "meta", "seed": self.seed, "trial": self.trial,
                    "K": self.K, **self.config}
            fh.write(json.dumps(meta) + "\n")
            for k, x, nu, g, dist, f in self.records():
                rec = {"k": k, "x": x.tolist(), "nu": nu.tolist(), "g": g.tolist(),
                       "dist": dist, "f": f}
                fh.write(json.dumps(rec) + "\n")
            final = {"k": self.K + 1, "x": self.xs[-1].tolist(),
                     "dist": None if self.dists is None else float(self.dists[-1]),
                     "f": float(self.fvals[-1]), "final": True}
            fh.write(json.dumps(final) + "\n")

    @staticmethod
    def from_jsonl(path) -> "IterateTrace":
        with open(path) as fh:
            meta = json.loads(fh.readline())
            if meta.get("type") != "meta":
                raise ValueError("trace file is missing its meta line")
            K = meta["K"]
            xs, nus, gs, dists, fvals = [], [], [], [], []
            has_dist = True
            for line in fh:
                rec = json.loads(line)
                xs.append(rec["x"])
                if rec.get("final"):
                    dists.append(rec["dist"] if rec["dist"] is not None else np.nan)
                    has_dist = has_dist and rec["dist"] is not None
                    fvals.append(rec["f"])
                    break
                nus.append(rec["nu"])
                gs.append(rec["g"])
                dists.append(rec["dist"] if rec["dist"] is not None else np.nan)
                has_dist = has_dist and rec["dist"] is not None
                fvals.append(rec["f"])
        config = {k: v for k, v in meta.items() if k not in ("type", "seed", "trial", "K")}
        return IterateTrace(
            xs=np.asarray(xs, dtype=float), nus=np.asarray(nus, dtype=float),
            gs=np.asarray(gs, dtype=float),
            dists=np.asarray(dists, dtype=float) if has_dist else None,
            fvals=np.asarray(fvals, dtype=float),
            seed=meta["seed"], trial=meta["trial"], config=config)


def _trace_config(p: ProblemInstance, mapping: GradientMapping,
                  schedule: StepSchedule, noise: NoiseModel, x0: np.ndarray) -> dict:
    return {
        "problem": p.label,
        "mapping": mapping.kind.value,
        "schedule": {"c1": schedule.c1, "c2": schedule.c2, "gamma": schedule.gamma},
        "noise": {"kind": noise.kind.value, "r": noise.r},
        "x0": [float(v) for v in x0],
    }


def run(p: ProblemInstance, mapping: GradientMapping | MappingKind | str,
        schedule: StepSchedule, noise: NoiseModel, x0, K: int,
        seed: int, trial: int = 0) -> IterateTrace:
    """Run the perturbed iteration for K steps and record a full trace."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not isinstance(mapping, GradientMapping):
        mapping = make_mapping(p, mapping)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.dimension,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({p.dimension},)")
    if not bool(p.objective.in_domain(x0)):
        raise DomainEscapeError(1, x0)

    d = p.dimension
    man = p.manifold
    value = p.objective.value
    apply = mapping.apply
    subgradient_kind = mapping.kind is MappingKind.SUBGRADIENT
    in_domain = p.objective.in_domain

    xs = np.empty((K + 1, d))
    nus = np.empty((K, d))
    gs = np.empty((K, d))
    fvals = np.empty(K + 1)
    dists = np.empty(K + 1) if man is not None else None

    gen = noise_stream(seed, trial)
    alphas = schedule.steps(np.arange(1, K + 1))
    x = x0.copy()
    k = 0
    for block in _noise_blocks(noise, gen, K, d):
        for nu in block:
            xs[k] = x
            fvals[k] = value(x)
            if dists is not None:
                dists[k] = man.distance(x)
            g = apply(alphas[k], x, nu)
            nus[k] = nu
            gs[k] = g
            x = x - alphas[k] * g
            k += 1
            if subgradient_kind and not bool(in_domain(x)):
                raise DomainEscapeError(k + 1, x)
    xs[K] = x
    fvals[K] = value(x)
    if dists is not None:
        dists[K] = man.distance(x)
    return IterateTrace(xs=xs, nus=nus, gs=gs, dists=dists, fvals=fvals,
                        seed=seed, trial=trial,
                        config=_trace_config(p, mapping, schedule, noise, x0))


@dataclass
class BatchResult:
    """Streamed reductions over a batch of independent trials."""

    trials: int
    K: int
    first_exit: np.ndarray      # (trials,) float; inf when never outside the ball
    final_xs: np.ndarray        # (trials, d)
    sum_dist: np.ndarray        # (K,) sum over surviving trials of dist(x_k, M)
    sum_dist2: np.ndarray       # (K,) same for squared distance
    surviving: np.ndarray       # (K,) int, #{trials with tau > k}
    trial_offset: int = 0


def _batch_mapping_step(p: ProblemInstance, kind: MappingKind, alpha: float,
                        X: np.ndarray, N: np.ndarray) -> np.ndarray:
    if kind is MappingKind.SUBGRADIENT:
        return np.asarray(p.objective.subgrad(X), dtype=float) + N
    if kind is MappingKind.PROXIMAL_GRADIENT:
        V = np.asarray(p.objective.smooth_grad(X), dtype=float) + N
        target = np.asarray(p.objective.prox(X - alpha * V, alpha), dtype=float)
        return (X - target) / alpha
    raise ValueError(f"batch stepping not supported for {kind}")


def run_batch(p: ProblemInstance, kind: MappingKind | str, schedule: StepSchedule,
              noise: NoiseModel, x0s: np.ndarray, K: int, seed: int,
              center=None, delta: float = math.inf, trial_offset: int = 0) -> BatchResult:
    """Step many independent trials at once (vectorized over the batch axis).

    Trial i consumes the same noise stream as ``run(..., trial=trial_offset+i)``,
    so any single trial replays bit-identically.  ``center``/``delta`` define
    the stopping ball used for the survival indicator.
    """
    kind = MappingKind(kind) if not isinstance(kind, MappingKind) else kind
    x0s = np.asarray(x0s, dtype=float)
    n, d = x0s.shape
    if d != p.dimension:
        raise ValueError("x0 batch dimension mismatch")
    man = p.manifold
    if man is None:
        raise ValueError("batch runs require a manifold oracle for distances")
    center = man.anchor if center is None else np.asarray(center, dtype=float)

    gens = [noise_stream(seed, trial_offset + i) for i in range(n)]
    alphas = schedule.steps(np.arange(1, K + 1))
    X = x0s.copy()
    first_exit = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    sum_dist = np.zeros(K)
    sum_dist2 = np.zeros(K)
    surviving = np.zeros(K, dtype=np.int64)

    k = 0
    done = 0
    while done < K:
        m = min(NOISE_CHUNK, K - done)
        if noise.kind is NoiseKind.ZERO:
            block = np.zeros((n, m, d))
        else:
            block = np.stack([noise.chunk(g, m, d) for g in gens])
        for j in range(m):
            # tau > k iff x_1..x_k all inside the ball
            outside = np.linalg.norm(X - center, axis=1) > delta
            newly = alive & outside
            if newly.any():
                first_exit[newly] = k + 1
                alive &= ~outside
            dist = np.asarray(man.distance(X), dtype=float)
            sum_dist[k] = dist[alive].sum()
            sum_dist2[k] = (dist[alive] ** 2).sum()
            surviving[k] = int(alive.sum())
            G = _batch_mapping_step(p, kind, alphas[k], X, block[:, j, :])
            X = X - alphas[k] * G
            k += 1
        done += m
    return BatchResult(trials=n, K=K, first_exit=first_exit, final_xs=X,
                       sum_dist=sum_dist, sum_dist2=sum_dist2,
                       surviving=surviving, trial_offset=trial_offset)


def stopping_time(trace: IterateTrace, center, delta: float, k0: int) -> float:
    """First index j >= k0 with ||x_j - center|| > delta, else math.inf.

    Indices run over the recorded steps 1..K; the serialized sentinel for
    "never" is K + 1.
    """
    if k0 < 1:
        raise ValueError("k0 must be at least 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    center = np.asarray(center, dtype=float)
    norms = np.linalg.norm(trace.xs[k0 - 1:trace.K] - center, axis=1)
    hits = np.flatnonzero(norms > delta)
    return math.inf if hits.size == 0 else int(hits[0] + k0)


def encode_stopping_time(tau: float, K: int) -> int:
    return K + 1 if math.isinf(tau) else int(tau)
