"""Post-processing diagnostics for iterate traces.

Everything here is pure computation over immutable traces: the shadow of the
iterates on the manifold and its error term, distance-decay rate fits,
escape statistics for saddle-anchored runs, the Lyapunov escape certificate on
quadratic models, and worst-case simulations of the scalar sequence bounds
used by the theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .problems import Classification, ProblemInstance
from .solvers import (IterateTrace, MappingKind, NoiseModel, StepSchedule,
                      run_batch, sample_uniform_ball, stopping_time, x0_stream)

__all__ = [
    "ShadowRecord",
    "shadow_sequence",
    "shadow_summary",
    "RateFit",
    "distance_rate_fit",
    "fit_from_sums",
    "lyapunov_eta",
    "LyapunovCertificate",
    "EscapeStats",
    "escape_statistics",
    "ConvergenceStats",
    "convergence_statistics",
    "sequence_lemma_oracle",
    "SequenceLemmaResult",
    "tail_sum_ratio",
]


# ---------------------------------------------------------------------------
# shadow sequence
# ---------------------------------------------------------------------------


@dataclass
class ShadowRecord:
    """One step of the manifold shadow y_k with its tangent noise and error.

    The recursion y_{k+1} = y_k - alpha_k grad_k - alpha_k xi_k + alpha_k E_k
    defines E_k uniquely; ``in_ball`` marks steps whose endpoints both project
    genuinely (x_k and x_{k+1} within twice the shadow radius), which is where
    the error bound is meaningful.
    """

    k: int
    y: np.ndarray
    xi: np.ndarray
    E: np.ndarray
    in_ball: bool
    y_next: np.ndarray

    @property
    def xi_norm(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def e_norm(self) -> float:
        return float(np.linalg.norm(self.E))


def shadow_sequence(trace: IterateTrace, p: ProblemInstance, delta: float) -> list[ShadowRecord]:
    """Shadow records for k = 1..K: y_k is the projection of x_k when x_k is
    within 2*delta of the anchor and the anchor itself otherwise."""
    man = p.manifold
    if man is None:
        raise ValueError("instance has no manifold oracle")
    if trace.nus is None or trace.nus.shape[0] != trace.K:
        raise ValueError("trace lacks noise records")
    if 4.0 * delta > man.validity_radius + 1e-12:
        raise ValueError(
            f"need 4*delta <= validity radius ({man.validity_radius}); got delta={delta}")
    anchor = man.anchor
    xs = trace.xs
    near = np.linalg.norm(xs - anchor, axis=1) <= 2.0 * delta
    ys = np.where(near[:, None], np.atleast_2d(man.project(xs)), anchor)
    alphas = trace.alphas()
    K = trace.K
    xis = grads = None
    try:
        # flat manifolds broadcast; fall back to per-step calls otherwise
        cand_xi = np.asarray(man.tangent_project(ys[:K], trace.nus), dtype=float)
        cand_grad = np.asarray(man.cov_grad(ys[:K]), dtype=float)
        if cand_xi.shape == trace.nus.shape and cand_grad.shape == ys[:K].shape:
            xis, grads = cand_xi, cand_grad
    except Exception:
        pass
    if xis is None:
        xis = np.stack([np.asarray(man.tangent_project(ys[i], trace.nus[i]), dtype=float)
                        for i in range(K)])
        grads = np.stack([np.asarray(man.cov_grad(ys[i]), dtype=float)
                          for i in range(K)])
    Es = (ys[1:] - ys[:K]) / alphas[:, None] + grads + xis
    records = []
    for i in range(K):
        records.append(ShadowRecord(k=i + 1, y=ys[i], xi=xis[i], E=Es[i],
                                    in_ball=bool(near[i] and near[i + 1]),
                                    y_next=ys[i + 1]))
    return records


def shadow_reconstruction_residual(records: list[ShadowRecord], alphas: np.ndarray,
                                   p: ProblemInstance) -> float:
    """Replay the boxed recursion from the stored fields; the result should be
    zero up to floating-point roundoff."""
    man = p.manifold
    worst = 0.0
    for rec, a in zip(records, alphas):
        grad = np.asarray(man.cov_grad(rec.y), dtype=float)
        replay = rec.y - a * grad - a * rec.xi + a * rec.E
        worst = max(worst, float(np.linalg.norm(replay - rec.y_next)))
    return worst


def shadow_summary(trace: IterateTrace, p: ProblemInstance, delta: float) -> dict:
    records = shadow_sequence(trace, p, delta)
    alphas = trace.alphas()
    in_ball = [r for r in records if r.in_ball]
    resid = shadow_reconstruction_residual(records, alphas, p)
    nu_norms = np.linalg.norm(trace.nus, axis=1)
    ratios = []
    for r in in_ball:
        i = r.k - 1
        denom = (1.0 + nu_norms[i]) ** 2 * (float(trace.dists[i]) + alphas[i])
        ratios.append(r.e_norm / denom)
    return {
        "steps": trace.K,
        "in_ball_steps": len(in_ball),
        "reconstruction_residual": resid,
        "max_E_norm_in_ball": max((r.e_norm for r in in_ball), default=0.0),
        "max_error_ratio": max(ratios, default=0.0),
        "delta": delta,
    }


# ---------------------------------------------------------------------------
# distance decay
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    k_range: tuple[int, int]
    surviving_at_end: int = 0
    degenerate: bool = False
    inconclusive: bool = False


def _loglog_fit(ks: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    lx, ly = np.log(ks), np.log(ys)
    A = np.column_stack([lx, np.ones_like(lx)])
    sol, _, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ sol
    ss_res = float(((ly - pred) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(sol[0]), float(sol[1]), r2


def fit_from_sums(sum_dist2: np.ndarray, surviving: np.ndarray, trials: int,
                  k_min: int, min_surviving: int = 10) -> RateFit:
    """Log-log fit of the trial average of dist^2(x_k, M) 1_{tau>k} against k."""
    K = sum_dist2.shape[0]
    if k_min < 1 or k_min >= K:
        raise ValueError("k_min out of range")
    ks = np.arange(1, K + 1)
    mean = sum_dist2 / trials
    window = ks >= k_min
    positive = window & (mean > 0.0)
    surviving_at_end = int(surviving[-1])
    if positive.sum() < max(8, (window.sum() // 2)):
        return RateFit(slope=np.nan, intercept=np.nan, r_squared=0.0,
                       k_range=(k_min, K), surviving_at_end=surviving_at_end,
                       degenerate=True,
                       inconclusive=surviving_at_end < min_surviving)
    slope, intercept, r2 = _loglog_fit(ks[positive], mean[positive])
    return RateFit(slope=slope, intercept=intercept, r_squared=r2,
                   k_range=(k_min, K), surviving_at_end=surviving_at_end,
                   inconclusive=surviving_at_end < min_surviving)


def distance_rate_fit(traces: Iterable[IterateTrace], p: ProblemInstance,
                      k_min: int, delta: float = math.inf,
                      min_traces: int = 50) -> RateFit:
    """Rate fit over a collection of traces of a saddle-anchored run.

    Each trial is masked by the event tau > k for the ball of radius ``delta``
    around the anchor, from its exit index onward.
    """
    man = p.manifold
    if man is None:
        raise ValueError("instance has no manifold oracle")
    anchor = man.anchor
    sum_dist2 = None
    surviving = None
    trials = 0
    K = None
    for trace in traces:
        if trace.dists is None:
            raise ValueError("trace lacks distance records")
        if K is None:
            K = trace.K
            sum_dist2 = np.zeros(K)
            surviving = np.zeros(K, dtype=np.int64)
        if trace.K != K:
            raise ValueError("traces have mismatched lengths")
        tau = stopping_time(trace, anchor, delta, 1) if math.isfinite(delta) else math.inf
        alive = np.ones(K, dtype=bool)
        if math.isfinite(tau):
            alive[int(tau) - 1:] = False
        sum_dist2 += np.where(alive, trace.dists[:K] ** 2, 0.0)
        surviving += alive
        trials += 1
    if trials < min_traces:
        raise ValueError(f"need at least {min_traces} traces, got {trials}")
    return fit_from_sums(sum_dist2, surviving, trials, k_min)


def tail_sum_ratio(trace: IterateTrace, p: ProblemInstance, delta: float,
                   k_start: int) -> float:
    """Ratio of the stopped tail sum of alpha_k dist(x_k, M) to the tail sum
    of alpha_k^2, a finite-horizon proxy for the tail-sum bound."""
    alphas = trace.alphas()
    tau = stopping_time(trace, p.manifold.anchor, delta, 1)
    K = trace.K
    alive = np.ones(K, dtype=bool)
    if math.isfinite(tau):
        alive[int(tau) - 1:] = False
    idx = np.arange(k_start - 1, K)
    num = float((alphas[idx] * trace.dists[idx] * alive[idx]).sum())
    den = float((alphas[idx] ** 2).sum())
    return num / den


# ---------------------------------------------------------------------------
# Lyapunov escape certificate (quadratic model)
# ---------------------------------------------------------------------------


@dataclass
class LyapunovCertificate:
    c: float
    c_prime: float
    violations: int
    grid_points: int
    epsilons: tuple[float, ...]


def lyapunov_eta(H: np.ndarray, p_point, *, ball_radius: float = 0.1,
                 grid_seed: int = 0, grid_size: int = 200,
                 epsilons: tuple[float, ...] = (1e-1, 1e-2, 1e-3)):
    """Escape function eta(v) = ||A (v - p)|| for the flow F(v) = -H (v - p).

    A projects onto the unstable subspace (eigenvectors of H with negative
    eigenvalue).  Returns (eta, certificate): the certified growth constant c
    is the smallest unstable rate, and c' is measured on a grid; for the
    quadratic model the growth inequality is exact, so c' is zero up to
    roundoff.
    """
    H = np.asarray(H, dtype=float)
    if not np.allclose(H, H.T, atol=1e-12):
        raise ValueError("H must be symmetric")
    p_point = np.asarray(p_point, dtype=float)
    vals, vecs = np.linalg.eigh(H)
    unstable = vals < 0.0
    if not unstable.any():
        raise ValueError("H is positive semidefinite: no unstable subspace")
    B = vecs[:, unstable]                    # columns span the unstable subspace
    c = float((-vals[unstable]).min())
    A = B.T

    def F(v):
        return -(np.asarray(v, dtype=float) - p_point) @ H.T

    def eta(v):
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(A @ (v - p_point)))

    gen = np.random.default_rng(grid_seed)
    d = H.shape[0]
    points = p_point + sample_uniform_ball(gen, grid_size, d, ball_radius)
    worst = 0.0
    violations = 0
    checks = 0
    for eps in epsilons:
        for v in points:
            lhs = eta(v + eps * F(v))
            rhs = (1.0 + c * eps) * eta(v)
            gap = (rhs - lhs) / eps ** 2
            worst = max(worst, gap)
            checks += 1
    c_prime = 0.0 if worst <= 1e-9 else worst
    for eps in epsilons:
        for v in points:
            lhs = eta(v + eps * F(v))
            rhs = (1.0 + c * eps) * eta(v) - c_prime * eps ** 2
            if lhs < rhs - 1e-12:
                violations += 1
    cert = LyapunovCertificate(c=c, c_prime=c_prime, violations=violations,
                               grid_points=checks, epsilons=tuple(epsilons))
    return eta, cert


# ---------------------------------------------------------------------------
# Monte Carlo escape / convergence statistics
# ---------------------------------------------------------------------------


@dataclass
class EscapeStats:
    trials: int
    escaped: int
    median_escape_index: Optional[int]
    delta: float
    horizon: int

    @property
    def escaped_fraction(self) -> float:
        return self.escaped / self.trials

    def horizon_warning(self) -> Optional[str]:
        if self.escaped < self.trials / 2:
            return (f"only {self.escaped}/{self.trials} trials escaped within "
                    f"K={self.horizon}; the horizon may be too small")
        return None

    def to_dict(self) -> dict:
        return {"trials": self.trials, "escaped": self.escaped,
                "escaped_fraction": self.escaped_fraction,
                "median_escape_index": self.median_escape_index,
                "delta": self.delta, "horizon": self.horizon,
                "warning": self.horizon_warning()}


def _initial_points(p: ProblemInstance, radius: float, trials: int, seed: int) -> np.ndarray:
    anchor = p.manifold.anchor
    d = p.dimension
    out = np.empty((trials, d))
    for t in range(trials):
        out[t] = anchor + sample_uniform_ball(x0_stream(seed, t), 1, d, radius)[0]
    return out


def escape_statistics(p: ProblemInstance, mapping: MappingKind | str,
                      schedule: StepSchedule, noise: NoiseModel, delta: float,
                      trials: int, K: int, seed: int) -> EscapeStats:
    """Fraction of independent trials whose iterates leave the delta-ball
    around the saddle anchor; starts are uniform in the delta/10 ball."""
    if p.classification is not Classification.ACTIVE_STRICT_SADDLE:
        raise ValueError(f"{p.label} is not an active strict saddle instance")
    x0s = _initial_points(p, delta / 10.0, trials, seed)
    result = run_batch(p, mapping, schedule, noise, x0s, K, seed,
                       center=p.manifold.anchor, delta=delta)
    exits = result.first_exit[np.isfinite(result.first_exit)]
    median = int(np.median(exits)) if exits.size else None
    return EscapeStats(trials=trials, escaped=int(exits.size),
                       median_escape_index=median, delta=delta, horizon=K)


@dataclass
class ConvergenceStats:
    trials: int
    converged: int
    tolerance: float
    horizon: int

    @property
    def converged_fraction(self) -> float:
        return self.converged / self.trials

    def to_dict(self) -> dict:
        return {"trials": self.trials, "converged": self.converged,
                "converged_fraction": self.converged_fraction,
                "tolerance": self.tolerance, "horizon": self.horizon}


def convergence_statistics(p: ProblemInstance, mapping: MappingKind | str,
                           schedule: StepSchedule, noise: NoiseModel,
                           trials: int, K: int, seed: int, *,
                           tolerance: float, x0_radius: float) -> ConvergenceStats:
    """Fraction of trials whose final iterate lies within ``tolerance`` of the
    anchor; the counterpart of escape statistics for minimizer instances."""
    x0s = _initial_points(p, x0_radius, trials, seed)
    result = run_batch(p, mapping, schedule, noise, x0s, K, seed,
                       center=p.manifold.anchor, delta=math.inf)
    final_dist = np.linalg.norm(result.final_xs - p.manifold.anchor, axis=1)
    return ConvergenceStats(trials=trials, converged=int((final_dist <= tolerance).sum()),
                            tolerance=tolerance, horizon=K)


# ---------------------------------------------------------------------------
# sequence-lemma simulations
# ---------------------------------------------------------------------------


@dataclass
class SequenceLemmaResult:
    lemma: str
    sup_weighted: float
    checkpoint_sups: dict[int, float]
    finite: bool
    final_weighted: float = math.nan

    def stable_within(self, rel: float, a: int, b: int) -> bool:
        va, vb = self.checkpoint_sups[a], self.checkpoint_sups[b]
        if not (math.isfinite(va) and math.isfinite(vb)) or vb == 0.0:
            return False
        return abs(vb - va) / vb <= rel


def sequence_lemma_oracle(lemma: str, *, c: float, C: float, gamma: float,
                          k0: int = 1, s0: float = 1.0, K: int = 10 ** 6,
                          checkpoints: tuple[int, ...] = (10 ** 5, 10 ** 6)) -> SequenceLemmaResult:
    """Simulate the worst-case (equality) version of one of the scalar
    sequence bounds and report sup_k s_k k^gamma.

    lemma 'squared' and 'fastsum' share the linear recursion
    s_{k+1} = (1 - c k^-gamma) s_k + C k^-2gamma clamped at zero (the bounds
    differ only in the hypotheses: c >= 16 versus c >= 6 when gamma = 1);
    'distance' runs the recursion on squared values.
    """
    if lemma not in ("squared", "distance", "fastsum"):
        raise ValueError("lemma must be one of 'squared', 'distance', 'fastsum'")
    if not (0.5 < gamma <= 1.0):
        raise ValueError("gamma must lie in (1/2, 1]")
    if c <= 0 or C < 0 or s0 < 0 or k0 < 1:
        raise ValueError("need c > 0, C >= 0, s0 >= 0, k0 >= 1")
    if lemma == "squared" and gamma == 1.0 and c < 16.0:
        raise ValueError("the squared-sequence bound requires c >= 16 when gamma = 1")
    if lemma == "fastsum" and gamma == 1.0 and c < 6.0:
        raise ValueError("the fast-summability bound requires c >= 6 when gamma = 1")
    if lemma == "distance" and s0 > c / (12.0 * gamma) + 1e-15:
        raise ValueError("the distance-sequence bound requires s_k <= c/(12 gamma)")

    s = float(s0)
    sup_w = s * k0 ** gamma
    cps = sorted(set(checkpoints))
    if cps[-1] > K:
        raise ValueError("checkpoints exceed the horizon K")
    checkpoint_sups: dict[int, float] = {}
    ci = 0
    k = k0
    w = s * k0 ** gamma
    while k <= K:
        w = s * k ** gamma
        if w > sup_w:
            sup_w = w
        while ci < len(cps) and k == cps[ci]:
            checkpoint_sups[cps[ci]] = sup_w
            ci += 1
        decay = 1.0 - c * k ** (-gamma)
        drive = C * k ** (-2.0 * gamma)
        if lemma == "distance":
            s = math.sqrt(max(0.0, s * s - c * k ** (-gamma) * s + drive))
        else:
            s = max(0.0, decay * s + drive)
        k += 1
    for cp in cps[ci:]:
        checkpoint_sups[cp] = sup_w
    return SequenceLemmaResult(lemma=lemma, sup_weighted=sup_w,
                               checkpoint_sups=checkpoint_sups,
                               finite=math.isfinite(sup_w),
                               final_weighted=w)
