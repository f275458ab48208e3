"""Sample-based estimators for the compatibility conditions between a problem
and its active manifold.

A universally quantified inequality cannot be proved by sampling, so every
verdict is three-valued: ``holds`` means the samples are consistent with the
condition (decaying or vanishing residuals), ``fails`` means a concrete
witness violates the defining inequality at the smallest radii, and
``inconclusive`` covers everything else.  The asymptotic little-o / big-O
distinctions are decided by two-point decay ratios across a dyadic radius
ladder together with a log-log regression slope.

Sampling is shell-based: uniform directions at fixed radii, with per-shell
random streams derived from (seed, shell index) so parallel and serial
evaluation agree bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .problems import ProblemInstance, tangent_basis
from .solvers import shell_stream

__all__ = [
    "Condition",
    "Verdict",
    "SampleLadder",
    "RegularityReport",
    "cone_gap",
    "check_a",
    "check_strong_a",
    "check_b",
    "estimate_aiming",
    "fit_sqrt_gap",
]

_INFORMATIVE_TOL = 1e-12
_SLOPE_MARGIN = 0.1


class Condition(enum.Enum):
    A = "a"
    B_LE = "b_le"
    B_EQ = "b_eq"
    B_GE = "b_ge"
    STRONG_A = "strong_a"
    STRONG_B_LE = "strong_b_le"
    STRONG_B_EQ = "strong_b_eq"
    STRONG_B_GE = "strong_b_ge"
    AIMING = "aiming"


class Verdict(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SampleLadder:
    """Dyadic shells around the anchor: radii r0 * 2^-j for j = 0..levels-1."""

    radii: tuple[float, ...]
    samples_per_radius: int = 64
    seed: int = 0

    def __post_init__(self):
        if len(self.radii) < 2:
            raise ValueError("need at least two radii")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be strictly decreasing")
        if self.radii[-1] <= 0:
            raise ValueError("radii must be positive")
        if self.samples_per_radius < 32:
            raise ValueError("need at least 32 samples per radius")

    @staticmethod
    def dyadic(r0: float, levels: int = 8, samples_per_radius: int = 64,
               seed: int = 0) -> "SampleLadder":
        return SampleLadder(tuple(r0 * 2.0 ** (-j) for j in range(levels)),
                            samples_per_radius, seed)

    @staticmethod
    def default_for(p: ProblemInstance, levels: int = 8,
                    samples_per_radius: int = 64, seed: int = 0) -> "SampleLadder":
        return SampleLadder.dyadic(p.manifold.validity_radius / 2.0, levels,
                                   samples_per_radius, seed)


@dataclass
class RegularityReport:
    condition: Condition
    fitted_constant: float
    fitted_exponent: float
    worst_witness: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]]
    verdict: Verdict
    shell_ratios: list[float] = field(default_factory=list)
    shell_radii: list[float] = field(default_factory=list)
    informative_samples: int = 0
    skipped_fraction: float = 0.0

    def to_dict(self) -> dict:
        w = self.worst_witness
        return {
            "condition": self.condition.value,
            "fitted_constant": self.fitted_constant,
            "fitted_exponent": self.fitted_exponent,
            "verdict": self.verdict.value,
            "worst_witness": None if w is None else
                {"x": w[0].tolist(), "y": w[1].tolist(), "v": w[2].tolist()},
            "shell_ratios": self.shell_ratios,
            "shell_radii": self.shell_radii,
            "informative_samples": self.informative_samples,
            "skipped_fraction": self.skipped_fraction,
        }


def cone_gap(u_set, v_project: Callable[[np.ndarray], np.ndarray]) -> float:
    """Largest distance from a unit vector of U to the closed cone V,
    estimated over the given unit sample of U."""
    us = [np.asarray(u, dtype=float) for u in u_set]
    if not us:
        raise ValueError("empty direction sample")
    for u in us:
        if abs(np.linalg.norm(u) - 1.0) > 1e-10:
            raise ValueError("directions must have unit norm")
    return max(float(np.linalg.norm(u - np.asarray(v_project(u), dtype=float)))
               for u in us)


def _check_ladder(p: ProblemInstance, ladder: SampleLadder) -> None:
    if p.manifold is None:
        raise ValueError(f"{p.label} has no manifold oracle")
    if ladder.radii[0] > p.manifold.validity_radius + 1e-12:
        raise ValueError("ladder radii exceed the manifold validity radius")


def _sphere_directions(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    z = gen.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return z / norms


def _sample_shell_points(p: ProblemInstance, ladder: SampleLadder,
                         shell: int) -> tuple[list[np.ndarray], int]:
    """Points of the instance at the shell radius: ambient sphere samples for
    function instances, set-membership samples for set instances.  Returns
    (points, skipped) where skipped counts off-domain draws."""
    gen = shell_stream(ladder.seed, shell)
    r = ladder.radii[shell]
    anchor = p.manifold.anchor
    n = ladder.samples_per_radius
    pts: list[np.ndarray] = []
    skipped = 0
    if p.kind == "set":
        for _ in range(n):
            pts.append(np.asarray(p.boundary_sampler(gen, r), dtype=float))
        return pts, 0
    dirs = _sphere_directions(gen, n, p.dimension)
    for u in dirs:
        x = anchor + r * u
        if not bool(p.objective.in_domain(x)):
            skipped += 1
            continue
        pts.append(x)
    return pts, skipped


def _generators_at(p: ProblemInstance, x: np.ndarray) -> np.ndarray:
    if p.kind == "set":
        return np.atleast_2d(p.normal_generators(x))
    if p.subgrad_extremes is not None:
        return np.atleast_2d(p.subgrad_extremes(x))
    return np.atleast_2d(p.objective.subgrad(x))


def _binned_max_fit(ts: np.ndarray, rs: np.ndarray) -> tuple[float, int]:
    """Slope of log(max residual per distance bin) against log(distance).

    Binning by the observed distances keeps mixed sample families honest: the
    fit follows the worst residual at every scale.  Returns (slope, bins).
    """
    mask = (ts > 0) & (rs > _INFORMATIVE_TOL)
    if mask.sum() < 2:
        return math.inf, 0
    lt = np.log2(ts[mask])
    lr = np.log(rs[mask])
    bins = np.floor(lt).astype(int)
    uniq = np.unique(bins)
    if uniq.size < 4:
        return math.nan, int(uniq.size)
    bx, by = [], []
    for b in uniq:
        sel = bins == b
        bx.append(lt[sel].mean() * math.log(2.0))
        by.append(lr[sel].max())
    A = np.column_stack([bx, np.ones(len(bx))])
    sol, _, _, _ = np.linalg.lstsq(A, np.asarray(by), rcond=None)
    return float(sol[0]), int(uniq.size)


def _shell_max(values: list[list[float]]) -> list[float]:
    return [max(v) if v else 0.0 for v in values]


# ---------------------------------------------------------------------------
# condition (a) and strong (a)
# ---------------------------------------------------------------------------


def _tangent_residuals(p: ProblemInstance, ladder: SampleLadder,
                       normalize_strong_a: bool):
    """Per-sample residuals for the (strong) (a) conditions.

    For set instances the residual of a unit normal v at x against the
    manifold normal space at y is the norm of its tangent component.  For
    function instances it is the tangent component of v - grad_M f(y),
    normalized by sqrt(1 + |v|^2) when measuring strong (a).
    """
    man = p.manifold
    samples = []   # (t, residual, x, y, v)
    skipped_total = 0
    total = 0
    for shell in range(len(ladder.radii)):
        pts, skipped = _sample_shell_points(p, ladder, shell)
        skipped_total += skipped
        total += skipped + len(pts)
        for x in pts:
            y = np.asarray(man.project(x), dtype=float)
            t = float(np.linalg.norm(x - y))
            if t < 1e-14:
                continue
            gens = _generators_at(p, x)
            if gens.shape[0] == 0:
                continue
            if p.kind == "set":
                resid, v_star = 0.0, gens[0]
                for v in gens:
                    rv = float(np.linalg.norm(man.tangent_project(y, v)))
                    if rv > resid:
                        resid, v_star = rv, v
            else:
                grad = np.asarray(man.cov_grad(y), dtype=float)
                resid, v_star = 0.0, gens[0]
                for v in gens:
                    rv = float(np.linalg.norm(man.tangent_project(y, v - grad)))
                    if normalize_strong_a:
                        rv /= math.sqrt(1.0 + float(v @ v))
                    if rv > resid:
                        resid, v_star = rv, v
            samples.append((t, resid, x, y, v_star, shell))
    return samples, skipped_total, total


def check_strong_a(p: ProblemInstance, ladder: SampleLadder) -> RegularityReport:
    """Does the tangent residual decay linearly with the distance to the
    manifold?  ``holds`` needs slope >= 1 - 0.1 (or vanishing residuals);
    ``fails`` needs the empirical constant to blow up toward the anchor."""
    _check_ladder(p, ladder)
    samples, skipped, total = _tangent_residuals(p, ladder, normalize_strong_a=True)
    return _linear_decay_report(Condition.STRONG_A, samples, skipped, total, ladder)


def _linear_decay_report(condition: Condition, samples, skipped, total,
                         ladder: SampleLadder) -> RegularityReport:
    n_shells = len(ladder.radii)
    if total and skipped / total > 0.9:
        return RegularityReport(condition, 0.0, math.nan, None,
                                Verdict.INCONCLUSIVE,
                                skipped_fraction=skipped / total)
    informative = [s for s in samples if s[1] > _INFORMATIVE_TOL]
    skipped_frac = skipped / total if total else 0.0
    if not informative:
        # residuals vanish identically: the inequality holds with constant 0
        return RegularityReport(condition, 0.0, math.inf, None, Verdict.HOLDS,
                                informative_samples=0, skipped_fraction=skipped_frac)
    shell_ratio: list[list[float]] = [[] for _ in range(n_shells)]
    worst = None
    for t, resid, x, y, v, shell in informative:
        ratio = resid / t
        shell_ratio[shell].append(ratio)
        if worst is None or ratio > worst[0]:
            worst = (ratio, x, y, v)
    ratios = _shell_max(shell_ratio)
    ts = np.array([s[0] for s in informative])
    rs = np.array([s[1] for s in informative])
    slope, bins = _binned_max_fit(ts, rs)
    constant = max(r for r in ratios)
    witness = (worst[1], worst[2], worst[3])
    if len(informative) < 8 or (bins < 4 and math.isfinite(slope)):
        return RegularityReport(condition, constant, slope, witness,
                                Verdict.INCONCLUSIVE, ratios,
                                list(ladder.radii), len(informative), skipped_frac)
    first = next((r for r in ratios if r > 0.0), 0.0)
    last = next((r for r in reversed(ratios) if r > 0.0), 0.0)
    if math.isnan(slope):
        verdict = Verdict.INCONCLUSIVE
    elif slope >= 1.0 - _SLOPE_MARGIN:
        verdict = Verdict.HOLDS
    elif last > 2.0 * max(first, _INFORMATIVE_TOL):
        verdict = Verdict.FAILS
    else:
        verdict = Verdict.INCONCLUSIVE
    return RegularityReport(condition, constant, slope, witness, verdict,
                            ratios, list(ladder.radii), len(informative),
                            skipped_frac)


def check_a(p: ProblemInstance, ladder: SampleLadder) -> RegularityReport:
    """Plain condition (a): the gap between sampled normals and the manifold
    normal space must vanish as samples approach the anchor."""
    _check_ladder(p, ladder)
    if p.kind != "set":
        raise ValueError("condition (a) gap checks run on set instances; "
                         "lift function instances through their epigraph")
    samples, skipped, total = _tangent_residuals(p, ladder, normalize_strong_a=False)
    n_shells = len(ladder.radii)
    skipped_frac = skipped / total if total else 0.0
    informative = [s for s in samples if s[1] > _INFORMATIVE_TOL]
    if not informative:
        return RegularityReport(Condition.A, 0.0, math.inf, None, Verdict.HOLDS,
                                skipped_fraction=skipped_frac)
    shell_gap: list[list[float]] = [[] for _ in range(n_shells)]
    worst = None
    for t, resid, x, y, v, shell in informative:
        shell_gap[shell].append(resid)
        if worst is None or resid > worst[0]:
            worst = (resid, x, y, v)
    gaps = _shell_max(shell_gap)
    first = next((g for g in gaps if g > 0.0), 0.0)
    last = next((g for g in reversed(gaps) if g > 0.0), 0.0)
    ts = np.array([s[0] for s in informative])
    rs = np.array([s[1] for s in informative])
    slope, _ = _binned_max_fit(ts, rs)
    if last <= 0.5 * first or last <= _INFORMATIVE_TOL:
        verdict = Verdict.HOLDS            # gap decays toward the anchor
    elif last >= 0.9 * first and last > 0.1:
        verdict = Verdict.FAILS            # gap persists at the smallest radii
    else:
        verdict = Verdict.INCONCLUSIVE
    return RegularityReport(Condition.A, max(gaps), slope,
                            (worst[1], worst[2], worst[3]), verdict, gaps,
                            list(ladder.radii), len(informative), skipped_frac)


def fit_sqrt_gap(p: ProblemInstance, ladder: SampleLadder) -> float:
    """Exponent of the normal-cone gap against the distance to the manifold;
    one half is the square-root regime, +inf means the gap vanishes."""
    _check_ladder(p, ladder)
    if p.kind != "set":
        raise ValueError("gap fits run on set instances")
    samples, _, _ = _tangent_residuals(p, ladder, normalize_strong_a=False)
    ts = np.array([s[0] for s in samples])
    rs = np.array([s[1] for s in samples])
    if not (rs > _INFORMATIVE_TOL).any():
        return math.inf
    slope, _ = _binned_max_fit(ts, rs)
    return slope


# ---------------------------------------------------------------------------
# conditions (b) and strong (b)
# ---------------------------------------------------------------------------


def _excess_part(excess: float, variant: str) -> float:
    if variant == "le":
        return max(excess, 0.0)
    if variant == "ge":
        return max(-excess, 0.0)
    if variant == "eq":
        return abs(excess)
    raise ValueError("variant must be 'le', 'eq', or 'ge'")


def _manifold_shell_points(p: ProblemInstance, gen: np.random.Generator,
                           r: float, n: int) -> np.ndarray:
    man = p.manifold
    anchor = man.anchor
    B = tangent_basis(man, anchor)
    if B.shape[1] == 0:
        return np.tile(anchor, (n, 1))
    coeff = _sphere_directions(gen, n, B.shape[1])
    return anchor + r * coeff @ B.T


def check_b(p: ProblemInstance, variant: str, ladder: SampleLadder,
            strong: bool = False) -> RegularityReport:
    """Lower-Taylor compatibility between off-manifold subgradients and
    manifold points.

    The per-pair excess is (f(x) + <v, y - x> - f(y)) / sqrt(1 + |v|^2) for
    function instances and <v, y - x> for unit normals of set instances.  The
    plain conditions need the (signed part of the) excess to be o(|y - x|):
    the shell ratio at the smallest radius must drop to at most half of the
    ratio at the largest.  The strong variants divide by |y - x|^2 and need
    the ratio to stay bounded.
    """
    _check_ladder(p, ladder)
    if variant not in ("le", "eq", "ge"):
        raise ValueError("variant must be 'le', 'eq', or 'ge'")
    man = p.manifold
    power = 2.0 if strong else 1.0
    n_shells = len(ladder.radii)
    shell_ratio: list[list[float]] = [[] for _ in range(n_shells)]
    samples = []
    skipped = 0
    total = 0
    for shell in range(n_shells):
        pts, sk = _sample_shell_points(p, ladder, shell)
        skipped += sk
        total += sk + len(pts)
        gen = shell_stream(ladder.seed ^ 0x5F5F, shell)
        ys = _manifold_shell_points(p, gen, ladder.radii[shell], len(pts))
        for x, y in zip(pts, ys):
            t = float(np.linalg.norm(y - x))
            if t < 1e-14:
                continue
            fx = float(p.objective.value(x))
            fy = float(p.objective.value(y))
            for v in _generators_at(p, x):
                if p.kind == "set":
                    excess = float(v @ (y - x))
                else:
                    excess = (fx + float(v @ (y - x)) - fy) / math.sqrt(1.0 + float(v @ v))
                part = _excess_part(excess, variant)
                ratio = part / t ** power
                shell_ratio[shell].append(ratio)
                samples.append((t, part, x, y, v, shell))
    if total and skipped / total > 0.9:
        return RegularityReport(_b_condition(variant, strong), 0.0, math.nan,
                                None, Verdict.INCONCLUSIVE,
                                skipped_fraction=skipped / total)
    skipped_frac = skipped / total if total else 0.0
    cond = _b_condition(variant, strong)
    informative = [s for s in samples if s[1] > _INFORMATIVE_TOL]
    if not informative:
        return RegularityReport(cond, 0.0, math.inf, None, Verdict.HOLDS,
                                informative_samples=0, skipped_fraction=skipped_frac)
    ratios = _shell_max(shell_ratio)
    worst = max(informative, key=lambda s: s[1] / (s[0] ** power))
    witness = (worst[2], worst[3], worst[4])
    constant = max(ratios)
    ts = np.array([s[0] for s in informative])
    parts = np.array([s[1] / s[0] ** power for s in informative])
    slope, bins = _binned_max_fit(ts, parts)
    if len(informative) < 8:
        return RegularityReport(cond, constant, slope, witness,
                                Verdict.INCONCLUSIVE, ratios,
                                list(ladder.radii), len(informative), skipped_frac)
    first = next((r for r in ratios if r > 0.0), 0.0)
    last = next((r for r in reversed(ratios) if r > 0.0), 0.0)
    if strong:
        if last <= 2.0 * first:
            verdict = Verdict.HOLDS
        elif math.isfinite(slope) and slope <= -_SLOPE_MARGIN and last > 2.0 * first:
            verdict = Verdict.FAILS
        else:
            verdict = Verdict.INCONCLUSIVE
    else:
        if last <= 0.5 * first:
            verdict = Verdict.HOLDS
        elif last >= 2.0 * max(first, _INFORMATIVE_TOL):
            verdict = Verdict.FAILS
        else:
            verdict = Verdict.INCONCLUSIVE
    return RegularityReport(cond, constant, slope, witness, verdict, ratios,
                            list(ladder.radii), len(informative), skipped_frac)


def _b_condition(variant: str, strong: bool) -> Condition:
    return {
        (False, "le"): Condition.B_LE, (False, "eq"): Condition.B_EQ,
        (False, "ge"): Condition.B_GE, (True, "le"): Condition.STRONG_B_LE,
        (True, "eq"): Condition.STRONG_B_EQ, (True, "ge"): Condition.STRONG_B_GE,
    }[(strong, variant)]


# ---------------------------------------------------------------------------
# proximal aiming
# ---------------------------------------------------------------------------


def estimate_aiming(p: ProblemInstance, ladder: SampleLadder) -> tuple[float, RegularityReport]:
    """Sampled infimum of <v, x - P_M(x)> / dist(x, M) over the two smallest
    shells, minimized over the generating subgradients at each sample."""
    _check_ladder(p, ladder)
    man = p.manifold
    mu_hat = math.inf
    worst = None
    informative = 0
    shells = (len(ladder.radii) - 2, len(ladder.radii) - 1)
    for shell in shells:
        pts, _ = _sample_shell_points(p, ladder, shell)
        for x in pts:
            y = np.asarray(man.project(x), dtype=float)
            t = float(np.linalg.norm(x - y))
            if t < 1e-14:
                continue
            informative += 1
            for v in _generators_at(p, x):
                ratio = float(v @ (x - y)) / t
                if ratio < mu_hat:
                    mu_hat = ratio
                    worst = (x, y, v)
    if not informative:
        report = RegularityReport(Condition.AIMING, 0.0, math.nan, None,
                                  Verdict.INCONCLUSIVE)
        return math.nan, report
    verdict = Verdict.HOLDS if mu_hat > 0.05 else Verdict.FAILS
    report = RegularityReport(Condition.AIMING, mu_hat, math.nan, worst,
                              verdict, informative_samples=informative)
    return mu_hat, report
