"""Test problems with known nonsmooth structure.

Each problem bundles a function (or constraint-set) oracle with an oracle for
the distinguished smooth manifold through its anchor point: nearest-point
projection, tangent projector, covariant gradient/Hessian of the objective
along the manifold, and distance.  All manifold projections are closed form;
nothing here does numeric root finding except small fixed-degree polynomial
solves.

Conventions:
  * points are 1-d float arrays; every oracle also broadcasts over a leading
    batch axis, i.e. accepts (n, d) and returns (n, ...)
  * the subgradient selection at a kink is the midpoint of the interval
    (np.sign convention, 0 at 0), so runs are reproducible
  * extended-valued objectives return +inf off their domain
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Classification",
    "ObjectiveOracle",
    "ManifoldOracle",
    "ProblemInstance",
    "SpectralSetOracle",
    "make_zoo",
    "get_problem",
    "zoo_labels",
    "tilt",
    "spectral_lift",
    "covariant_consistency",
    "epigraph_instance",
    "tangent_basis",
    "sym_eig",
]

PROJECTION_TOL = 1e-10
_KINK_TOL = 1e-12
_MEMBERSHIP_TOL = 1e-9


class Classification(enum.Enum):
    LOCAL_MIN = "local_min"
    ACTIVE_STRICT_SADDLE = "active_strict_saddle"
    NON_REGULAR_EXAMPLE = "non_regular_example"


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _unbatch(out: np.ndarray, single: bool) -> np.ndarray:
    return out[0] if single else out


@dataclass(frozen=True)
class ObjectiveOracle:
    """Function-value / subgradient access for one problem.

    ``subgrad`` returns one Clarke subgradient selection.  ``prox`` (when
    present) is the proximal map of the nonsmooth part h alone, and
    ``smooth_grad`` the gradient of the smooth part g, so that
    value = g + h for proximal-composite instances.
    """

    dimension: int
    value: Callable[[np.ndarray], np.ndarray]
    subgrad: Callable[[np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: Optional[float] = None
    prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    project_constraint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smooth_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class ManifoldOracle:
    """Closed-form access to the active manifold through ``anchor``.

    ``cov_hess`` returns the ambient d x d matrix P H P whose restriction to
    the tangent space is the covariant Hessian; use :func:`tangent_basis` to
    extract the restricted matrix.
    """

    project: Callable[[np.ndarray], np.ndarray]
    tangent_project: Callable[[np.ndarray, np.ndarray], np.ndarray]
    cov_grad: Callable[[np.ndarray], np.ndarray]
    cov_hess: Callable[[np.ndarray], np.ndarray]
    distance: Callable[[np.ndarray], np.ndarray]
    anchor: np.ndarray
    validity_radius: float


@dataclass(frozen=True)
class ProblemInstance:
    objective: ObjectiveOracle
    manifold: Optional[ManifoldOracle]
    classification: Classification
    label: str
    # "function" instances drive iterations through value/subgrad; "set"
    # instances are indicator objectives whose geometry is supplied by
    # analytically coded unit normals.
    kind: str = "function"
    # finitely many generating extreme subgradients (function instances) or
    # generating unit normals (set instances), one row per generator
    subgrad_extremes: Optional[Callable[[np.ndarray], np.ndarray]] = None
    normal_generators: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # draws one point of the set at roughly the given distance from the
    # anchor; only set instances carry this
    boundary_sampler: Optional[Callable[[np.random.Generator, float], np.ndarray]] = None
    notes: str = ""

    @property
    def dimension(self) -> int:
        return self.objective.dimension

    def metadata(self) -> dict:
        m = {
            "label": self.label,
            "dimension": self.dimension,
            "classification": self.classification.value,
            "kind": self.kind,
            "anchor": None,
            "validity_radius": None,
        }
        if self.manifold is not None:
            m["anchor"] = [float(v) for v in self.manifold.anchor]
            m["validity_radius"] = float(self.manifold.validity_radius)
        return m

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True)


def tangent_basis(manifold: ManifoldOracle, y: np.ndarray) -> np.ndarray:
    """Orthonormal basis of T_M(y) as columns, from the tangent projector."""
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    P = np.column_stack([manifold.tangent_project(y, e) for e in np.eye(d)])
    w, V = np.linalg.eigh((P + P.T) / 2.0)
    return V[:, w > 0.5]


def restricted_hessian(p: ProblemInstance, y: np.ndarray) -> np.ndarray:
    """Covariant Hessian expressed in an orthonormal tangent basis at y."""
    B = tangent_basis(p.manifold, y)
    H = p.manifold.cov_hess(np.asarray(y, dtype=float))
    return B.T @ H @ B


# ---------------------------------------------------------------------------
# small symmetric eigensolvers (used by the spectral lifts)
# ---------------------------------------------------------------------------

_JACOBI_TOL = 1e-12


def _eigh2(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = A[0, 0], A[0, 1], A[1, 1]
    if abs(b) < _JACOBI_TOL * max(1.0, abs(a), abs(c)):
        vals = np.array([a, c])
        vecs = np.eye(2)
    else:
        mid = 0.5 * (a + c)
        rad = math.hypot(0.5 * (a - c), b)
        vals = np.array([mid + rad, mid - rad])
        theta = 0.5 * math.atan2(2.0 * b, a - c)
        ct, st = math.cos(theta), math.sin(theta)
        vecs = np.array([[ct, -st], [st, ct]])
    return vals, vecs


def _jacobi(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # cyclic-by-row Jacobi; quadratic convergence makes 30 sweeps ample
    n = A.shape[0]
    B = A.copy()
    V = np.eye(n)
    for _ in range(30):
        off = math.sqrt(sum(B[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= _JACOBI_TOL * max(1.0, float(np.abs(B).max())):
            break
        for p_ in range(n - 1):
            for q in range(p_ + 1, n):
                if abs(B[p_, q]) <= _JACOBI_TOL * max(1.0, float(np.abs(B).max())):
                    continue
                theta = 0.5 * math.atan2(2.0 * B[p_, q], B[p_, p_] - B[q, q])
                c, s = math.cos(theta), math.sin(theta)
                R = np.eye(n)
                R[p_, p_] = R[q, q] = c
                R[p_, q] = -s
                R[q, p_] = s
                B = R.T @ B @ R
                V = V @ R
    return np.diag(B).copy(), V


def _lex_sign(vecs: np.ndarray) -> np.ndarray:
    # deterministic sign: first entry of magnitude > tol made positive
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def sym_eig(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a small symmetric matrix.

    Returns (vals, U) with eigenvalues sorted descending and ties broken by
    eigenvector lexicographic order after sign normalization, so the
    factorization is a deterministic function of X.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(X, X.T, atol=1e-10, rtol=0.0):
        raise ValueError("eigendecomposition requires a symmetric matrix")
    n = X.shape[0]
    if n == 2:
        vals, vecs = _eigh2(X)
    else:
        vals, vecs = _jacobi(X)
    vecs = _lex_sign(vecs)
    order = sorted(range(n), key=lambda j: (-vals[j], tuple(vecs[:, j])))
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class SpectralSetOracle:
    """Projection onto the matrix set lambda^{-1}(S) induced by a
    permutation-symmetric set S through the ordered-eigenvalue map."""

    n: int
    sym_project: Callable[[np.ndarray], np.ndarray]

    def project(self, X: np.ndarray) -> np.ndarray:
        vals, U = sym_eig(X)
        w = np.asarray(self.sym_project(vals), dtype=float)
        return U @ np.diag(w) @ U.T

    def distance(self, X: np.ndarray) -> float:
        vals, _ = sym_eig(X)
        w = np.asarray(self.sym_project(vals), dtype=float)
        return float(np.linalg.norm(vals - w))


def spectral_lift(sym_project: Callable[[np.ndarray], np.ndarray], n: int) -> SpectralSetOracle:
    if n not in (2, 3):
        raise ValueError("spectral lifts are provided for n in {2, 3}")
    return SpectralSetOracle(n=n, sym_project=sym_project)


# ---------------------------------------------------------------------------
# zoo instances
# ---------------------------------------------------------------------------


def _always_true(x):
    x, single = _as_batch(x)
    return _unbatch(np.ones(x.shape[0], dtype=bool), single)


def _flat_axis_manifold(dim: int, axis_mask: np.ndarray, anchor: np.ndarray,
                        cov_grad, cov_hess, validity: float) -> ManifoldOracle:
    """Manifold = anchor + span of the masked coordinates (flat subspace)."""
    axis_mask = np.asarray(axis_mask, dtype=float)
    anchor = np.asarray(anchor, dtype=float)

    def project(x):
        x, single = _as_batch(x)
        out = x * axis_mask + anchor * (1.0 - axis_mask)
        return _unbatch(out, single)

    def tangent_project(y, w):
        w, single = _as_batch(w)
        return _unbatch(w * axis_mask, single)

    def distance(x):
        x, single = _as_batch(x)
        out = np.linalg.norm((x - anchor) * (1.0 - axis_mask), axis=1)
        return _unbatch(out, single)

    return ManifoldOracle(
        project=project,
        tangent_project=tangent_project,
        cov_grad=cov_grad,
        cov_hess=cov_hess,
        distance=distance,
        anchor=anchor,
        validity_radius=validity,
    )


def _make_z1() -> ProblemInstance:
    # f(x, y) = |x| - y^2; the y-axis carries the nonsmooth activity and the
    # origin is a strict saddle of the restriction.
    def value(x):
        x, single = _as_batch(x)
        return _unbatch(np.abs(x[:, 0]) - x[:, 1] ** 2, single)

    def subgrad(x):
        x, single = _as_batch(x)
        g = np.stack([np.sign(x[:, 0]), -2.0 * x[:, 1]], axis=1)
        return _unbatch(g, single)

    def extremes(x):
        x = np.asarray(x, dtype=float)
        if abs(x[0]) > _KINK_TOL:
            return subgrad(x)[None, :]
        return np.array([[-1.0, -2.0 * x[1]], [1.0, -2.0 * x[1]]])

    def cov_grad(y):
        y, single = _as_batch(y)
        g = np.stack([np.zeros(y.shape[0]), -2.0 * y[:, 1]], axis=1)
        return _unbatch(g, single)

    manifold = _flat_axis_manifold(
        2, np.array([0.0, 1.0]), np.zeros(2),
        cov_grad, lambda y: np.diag([0.0, -2.0]), 0.5)
    objective = ObjectiveOracle(
        dimension=2, value=value, subgrad=subgrad, in_domain=_always_true,
        lipschitz_bound=math.sqrt(5.0))  # valid on the unit ball at the anchor
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.ACTIVE_STRICT_SADDLE, label="Z1",
        subgrad_extremes=extremes,
        notes="absolute value minus a square; saddle escape benchmark")


def _make_z2() -> ProblemInstance:
    def value(x):
        x, single = _as_batch(x)
        return _unbatch(np.abs(x[:, 0]) + x[:, 1] ** 2, single)

    def subgrad(x):
        x, single = _as_batch(x)
        g = np.stack([np.sign(x[:, 0]), 2.0 * x[:, 1]], axis=1)
        return _unbatch(g, single)

    def extremes(x):
        x = np.asarray(x, dtype=float)
        if abs(x[0]) > _KINK_TOL:
            return subgrad(x)[None, :]
        return np.array([[-1.0, 2.0 * x[1]], [1.0, 2.0 * x[1]]])

    def cov_grad(y):
        y, single = _as_batch(y)
        g = np.stack([np.zeros(y.shape[0]), 2.0 * y[:, 1]], axis=1)
        return _unbatch(g, single)

    manifold = _flat_axis_manifold(
        2, np.array([0.0, 1.0]), np.zeros(2),
        cov_grad, lambda y: np.diag([0.0, 2.0]), 0.5)
    objective = ObjectiveOracle(
        dimension=2, value=value, subgrad=subgrad, in_domain=_always_true,
        lipschitz_bound=math.sqrt(5.0))
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.LOCAL_MIN, label="Z2",
        subgrad_extremes=extremes,
        notes="convex companion of Z1; sharp local minimizer at the origin")


# --- Z3: epigraph of max{0, y - x^2} in R^3, linear objective -y ------------

def _z3_residual(x):
    # r - max(0, y - x^2); nonnegative on the set
    return x[..., 2] - np.maximum(0.0, x[..., 1] - x[..., 0] ** 2)


def _z3_project_point(p: np.ndarray) -> np.ndarray:
    """Nearest point of {(a, b, r): r >= max(0, b - a^2)} via the faces.

    Candidates: the point itself, the flat face {r = 0, b <= a^2}, the
    parabolic face {r = b - a^2}, and the kink edge {(a, a^2, 0)}.  Face
    projections reduce to cubic equations solved by np.roots.
    """
    a, b, r = float(p[0]), float(p[1]), float(p[2])
    if r >= max(0.0, b - a ** 2):
        return np.array([a, b, r])
    best = None

    def consider(q):
        nonlocal best
        q = np.asarray(q, dtype=float)
        d = np.linalg.norm(q - p)
        if best is None or d < best[0]:
            best = (d, q)

    # flat face interior
    if b <= a ** 2:
        consider([a, b, 0.0])
    # parabolic face: with multiplier t the stationary point is
    # x = a/(1+2t), y = b + t, r = r - t, and the constraint reduces to
    # (2t + (b-r))(1+2t)^2 = a^2, a cubic in t
    coeffs = np.array([8.0,
                       8.0 + 4.0 * (b - r),
                       2.0 + 4.0 * (b - r),
                       (b - r) - a ** 2])
    for t in np.roots(coeffs):
        if abs(t.imag) > 1e-9:
            continue
        t = float(t.real)
        denom = 1.0 + 2.0 * t
        if abs(denom) < 1e-12:
            continue
        x_ = a / denom
        y_ = b + t
        r_ = r - t
        if r_ >= -1e-12 and abs((y_ - x_ ** 2) - r_) < 1e-6:
            consider([x_, y_, max(r_, 0.0)])
    # kink edge (x, x^2, 0): minimize (x-a)^2 + (x^2-b)^2
    for x_ in np.roots([4.0, 0.0, 2.0 - 4.0 * b, -2.0 * a]):
        if abs(x_.imag) > 1e-9:
            continue
        x_ = float(x_.real)
        consider([x_, x_ ** 2, 0.0])
    return best[1]


def _make_z3() -> ProblemInstance:
    def in_domain(x):
        x, single = _as_batch(x)
        return _unbatch(_z3_residual(x) >= -_MEMBERSHIP_TOL, single)

    def value(x):
        x, single = _as_batch(x)
        v = np.where(_z3_residual(x) >= -_MEMBERSHIP_TOL, -x[:, 1], np.inf)
        return _unbatch(v, single)

    def subgrad(x):
        x, single = _as_batch(x)
        g = np.tile(np.array([0.0, -1.0, 0.0]), (x.shape[0], 1))
        return _unbatch(g, single)

    def project_constraint(x):
        x, single = _as_batch(x)
        out = np.stack([_z3_project_point(row) for row in x])
        return _unbatch(out, single)

    def normals(x):
        x = np.asarray(x, dtype=float)
        a, b, r = x
        gens = []
        on_flat = r <= _MEMBERSHIP_TOL and b <= a ** 2 + _MEMBERSHIP_TOL
        on_par = abs(r - (b - a ** 2)) <= _MEMBERSHIP_TOL and r >= -_MEMBERSHIP_TOL
        if on_flat:
            gens.append([0.0, 0.0, -1.0])
        if on_par:
            n = np.array([-2.0 * a, 1.0, -1.0])
            gens.append(n / np.linalg.norm(n))
        if not gens:
            return np.zeros((0, 3))
        return np.asarray(gens, dtype=float)

    def boundary_sampler(rng, radius):
        if rng.random() < 0.5:
            t = radius * (1.0 if rng.random() < 0.5 else -1.0)
            return np.array([t, t ** 2, 0.0])
        theta = 2.0 * math.pi * rng.random()
        a, b = radius * math.cos(theta), radius * math.sin(theta)
        return np.array([a, b, max(0.0, b - a ** 2)])

    def cov_grad(y):
        y, single = _as_batch(y)
        return _unbatch(np.zeros_like(y), single)

    manifold = _flat_axis_manifold(
        3, np.array([1.0, 0.0, 0.0]), np.zeros(3),
        cov_grad, lambda y: np.zeros((3, 3)), 0.5)
    objective = ObjectiveOracle(
        dimension=3, value=value, subgrad=subgrad, in_domain=in_domain,
        lipschitz_bound=1.0, project_constraint=project_constraint)
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.NON_REGULAR_EXAMPLE, label="Z3",
        kind="set", normal_generators=normals, boundary_sampler=boundary_sampler,
        notes="normal cones along the kink curve tilt away from the x-axis "
              "like the square root of the distance")


# --- Z4: graph of t -> (t, t^{3/2}) against the origin ----------------------

def _make_z4() -> ProblemInstance:
    def in_domain(x):
        x, single = _as_batch(x)
        t = x[:, 0]
        ok = (t >= -_MEMBERSHIP_TOL) & (
            np.abs(x[:, 1] - np.maximum(t, 0.0) ** 1.5) <= _MEMBERSHIP_TOL)
        return _unbatch(ok, single)

    def value(x):
        x, single = _as_batch(x)
        v = np.where(np.atleast_1d(in_domain(x)), 0.0, np.inf)
        return _unbatch(v, single)

    def subgrad(x):
        x, single = _as_batch(x)
        return _unbatch(np.zeros_like(x), single)

    def normals(x):
        x = np.asarray(x, dtype=float)
        t = max(x[0], 0.0)
        n = np.array([-1.5 * math.sqrt(t), 1.0])
        n = n / np.linalg.norm(n)
        return np.stack([n, -n])

    def boundary_sampler(rng, radius):
        t = radius * (0.75 + 0.25 * rng.random())
        return np.array([t, t ** 1.5])

    def project(x):
        x, single = _as_batch(x)
        return _unbatch(np.zeros_like(x), single)

    def tangent_project(y, w):
        w, single = _as_batch(w)
        return _unbatch(np.zeros_like(w), single)

    def distance(x):
        x, single = _as_batch(x)
        return _unbatch(np.linalg.norm(x, axis=1), single)

    manifold = ManifoldOracle(
        project=project, tangent_project=tangent_project,
        cov_grad=lambda y: np.zeros(2), cov_hess=lambda y: np.zeros((2, 2)),
        distance=distance, anchor=np.zeros(2), validity_radius=0.5)
    objective = ObjectiveOracle(
        dimension=2, value=value, subgrad=subgrad, in_domain=in_domain)
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.NON_REGULAR_EXAMPLE, label="Z4",
        kind="set", normal_generators=normals, boundary_sampler=boundary_sampler,
        notes="three-halves power curve against the origin; the quadratic "
              "lower estimate fails like t^(-1/2)")


# --- Z5: Cartan umbrella z(x^2+y^2) = x^3 against the z-axis ----------------

def _make_z5() -> ProblemInstance:
    def _poly(x):
        return x[..., 2] * (x[..., 0] ** 2 + x[..., 1] ** 2) - x[..., 0] ** 3

    def in_domain(x):
        x, single = _as_batch(x)
        on_sheet = np.abs(_poly(x)) <= _MEMBERSHIP_TOL
        on_stick = x[:, 0] ** 2 + x[:, 1] ** 2 <= _MEMBERSHIP_TOL ** 2
        return _unbatch(on_sheet | on_stick, single)

    def value(x):
        x, single = _as_batch(x)
        v = np.where(np.atleast_1d(in_domain(x)), 0.0, np.inf)
        return _unbatch(v, single)

    def subgrad(x):
        x, single = _as_batch(x)
        return _unbatch(np.zeros_like(x), single)

    def normals(x):
        x = np.asarray(x, dtype=float)
        a, b, c = x
        if a ** 2 + b ** 2 <= _MEMBERSHIP_TOL ** 2:
            # stick: every horizontal direction is normal; two generators
            # suffice for gap measurements against the z-axis
            return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        g = np.array([2.0 * a * c - 3.0 * a ** 2, 2.0 * b * c, a ** 2 + b ** 2])
        nrm = np.linalg.norm(g)
        if nrm < 1e-14:
            return np.zeros((0, 3))
        g = g / nrm
        return np.stack([g, -g])

    def boundary_sampler(rng, radius):
        if rng.random() < 0.25:
            return np.array([0.0, 0.0, radius * (1.0 if rng.random() < 0.5 else -1.0)])
        theta = 2.0 * math.pi * rng.random()
        a, b = radius * math.cos(theta), radius * math.sin(theta)
        return np.array([a, b, a ** 3 / (a ** 2 + b ** 2)])

    def cov_grad(y):
        y, single = _as_batch(y)
        return _unbatch(np.zeros_like(y), single)

    manifold = _flat_axis_manifold(
        3, np.array([0.0, 0.0, 1.0]), np.zeros(3),
        cov_grad, lambda y: np.zeros((3, 3)), 0.5)
    objective = ObjectiveOracle(
        dimension=3, value=value, subgrad=subgrad, in_domain=in_domain)
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.NON_REGULAR_EXAMPLE, label="Z5",
        kind="set", normal_generators=normals, boundary_sampler=boundary_sampler,
        notes="umbrella surface whose sheet normals stay a fixed angle away "
              "from the axis normal space")


# --- Z6: ||Ax||_1 - c||x||^2 with the third axis active ---------------------

_Z6_A = np.array([[1.0, 0.5, 0.0], [-0.5, 1.0, 0.0]])
_Z6_C = 0.25


def _make_z6() -> ProblemInstance:
    A = _Z6_A
    c = _Z6_C

    def value(x):
        x, single = _as_batch(x)
        v = np.abs(x @ A.T).sum(axis=1) - c * (x ** 2).sum(axis=1)
        return _unbatch(v, single)

    def subgrad(x):
        x, single = _as_batch(x)
        g = np.sign(x @ A.T) @ A - 2.0 * c * x
        return _unbatch(g, single)

    def extremes(x):
        x = np.asarray(x, dtype=float)
        ax = A @ x
        rows = []
        choices = [[s] if abs(v) > _KINK_TOL else [-1.0, 1.0]
                   for v, s in zip(ax, np.sign(ax))]
        for s0 in choices[0]:
            for s1 in choices[1]:
                rows.append(np.array([s0, s1]) @ A - 2.0 * c * x)
        return np.stack(rows)

    def cov_grad(y):
        y, single = _as_batch(y)
        g = np.zeros_like(y)
        g[:, 2] = -2.0 * c * y[:, 2]
        return _unbatch(g, single)

    manifold = _flat_axis_manifold(
        3, np.array([0.0, 0.0, 1.0]), np.zeros(3),
        cov_grad, lambda y: np.diag([0.0, 0.0, -2.0 * c]), 0.5)
    objective = ObjectiveOracle(
        dimension=3, value=value, subgrad=subgrad, in_domain=_always_true,
        lipschitz_bound=2.2)  # max ||A^T s|| + 2c on the unit ball
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.ACTIVE_STRICT_SADDLE, label="Z6",
        subgrad_extremes=extremes,
        notes="weakly convex composite; the x3-axis is active and carries "
              "negative curvature -2c")


# --- Z7: smooth quadratic plus the l1 norm, anchored off the second kink ----

def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _make_z7() -> ProblemInstance:
    lam = 1.0

    def smooth_grad(x):
        x, single = _as_batch(x)
        g = np.stack([x[:, 0], 2.0 * (x[:, 1] - 1.0)], axis=1)
        return _unbatch(g, single)

    def value(x):
        x, single = _as_batch(x)
        g = 0.5 * x[:, 0] ** 2 + (x[:, 1] - 1.0) ** 2
        h = lam * np.abs(x).sum(axis=1)
        return _unbatch(g + h, single)

    def subgrad(x):
        x, single = _as_batch(x)
        g = np.stack([x[:, 0], 2.0 * (x[:, 1] - 1.0)], axis=1) + lam * np.sign(x)
        return _unbatch(g, single)

    def extremes(x):
        x = np.asarray(x, dtype=float)
        base = smooth_grad(x)
        choices = [[s] if abs(v) > _KINK_TOL else [-1.0, 1.0]
                   for v, s in zip(x, np.sign(x))]
        rows = []
        for s0 in choices[0]:
            for s1 in choices[1]:
                rows.append(base + lam * np.array([s0, s1]))
        return np.stack(rows)

    def prox(x, alpha):
        x, single = _as_batch(x)
        return _unbatch(_soft_threshold(x, alpha * lam), single)

    def cov_grad(y):
        # restriction of g + lam*|x2| to the x2-axis, valid for x2 > 0
        y, single = _as_batch(y)
        g = np.stack([np.zeros(y.shape[0]), 2.0 * (y[:, 1] - 1.0) + lam], axis=1)
        return _unbatch(g, single)

    anchor = np.array([0.0, 0.5])
    # the second l1 kink sits 0.5 away from the anchor along the manifold, so
    # the validity radius backs off from the default
    manifold = _flat_axis_manifold(
        2, np.array([0.0, 1.0]), anchor,
        cov_grad, lambda y: np.diag([0.0, 2.0]), 0.4)
    objective = ObjectiveOracle(
        dimension=2, value=value, subgrad=subgrad, in_domain=_always_true,
        lipschitz_bound=3.0 + math.sqrt(2.0), prox=prox, smooth_grad=smooth_grad)
    return ProblemInstance(
        objective=objective, manifold=manifold,
        classification=Classification.LOCAL_MIN, label="Z7",
        subgrad_extremes=extremes,
        notes="proximal composite with closed-form soft-threshold prox; "
              "anchor (0, 0.5) is a sharp minimizer on the x2-axis")


_ZOO_BUILDERS = {
    "Z1": _make_z1, "Z2": _make_z2, "Z3": _make_z3, "Z4": _make_z4,
    "Z5": _make_z5, "Z6": _make_z6, "Z7": _make_z7,
}


def make_zoo() -> list[ProblemInstance]:
    return [b() for b in _ZOO_BUILDERS.values()]


def zoo_labels() -> list[str]:
    return list(_ZOO_BUILDERS)


def get_problem(label: str) -> ProblemInstance:
    try:
        return _ZOO_BUILDERS[label]()
    except KeyError:
        raise KeyError(f"unknown problem label {label!r}; "
                       f"available: {', '.join(_ZOO_BUILDERS)}") from None


# ---------------------------------------------------------------------------
# derived instances
# ---------------------------------------------------------------------------


def tilt(p: ProblemInstance, v) -> ProblemInstance:
    """Linear perturbation: value and subgradients shifted by -<v, .>."""
    v = np.asarray(v, dtype=float)
    if v.shape != (p.dimension,):
        raise ValueError(f"tilt vector has dimension {v.shape}, "
                         f"problem expects ({p.dimension},)")
    obj = p.objective
    man = p.manifold

    def value(x):
        x, single = _as_batch(x)
        return _unbatch(np.asarray(obj.value(x), dtype=float) - x @ v, single)

    def subgrad(x):
        x, single = _as_batch(x)
        return _unbatch(np.asarray(obj.subgrad(x), dtype=float) - v, single)

    smooth_grad = None
    if obj.smooth_grad is not None:
        def smooth_grad(x):  # noqa: F811 - deliberate rebinding
            x, single = _as_batch(x)
            return _unbatch(np.asarray(obj.smooth_grad(x), dtype=float) - v, single)

    extremes = None
    if p.subgrad_extremes is not None:
        def extremes(x):
            return p.subgrad_extremes(x) - v

    new_man = None
    if man is not None:
        def cov_grad(y):
            y, single = _as_batch(y)
            base = np.atleast_2d(np.asarray(man.cov_grad(y), dtype=float))
            shift = np.stack([np.asarray(man.tangent_project(row, v), dtype=float)
                              for row in y])
            return _unbatch(base - shift, single)

        new_man = ManifoldOracle(
            project=man.project, tangent_project=man.tangent_project,
            cov_grad=cov_grad, cov_hess=man.cov_hess, distance=man.distance,
            anchor=man.anchor, validity_radius=man.validity_radius)

    new_obj = ObjectiveOracle(
        dimension=obj.dimension, value=value, subgrad=subgrad,
        in_domain=obj.in_domain,
        lipschitz_bound=(None if obj.lipschitz_bound is None
                         else obj.lipschitz_bound + float(np.linalg.norm(v))),
        prox=obj.prox, project_constraint=obj.project_constraint,
        smooth_grad=smooth_grad)
    return ProblemInstance(
        objective=new_obj, manifold=new_man, classification=p.classification,
        label=p.label + "+tilt", kind=p.kind,
        subgrad_extremes=extremes, normal_generators=p.normal_generators,
        boundary_sampler=p.boundary_sampler, notes=p.notes)


def covariant_consistency(p: ProblemInstance, y, h: float) -> float:
    """Largest gap between the covariant Hessian quadratic form and a central
    second difference of f along projected tangent lines through y."""
    if p.manifold is None:
        raise ValueError("instance has no manifold oracle")
    if not (0.0 < h <= 1e-2):
        raise ValueError("step h must lie in (0, 1e-2]")
    man = p.manifold
    y = np.asarray(y, dtype=float)
    if float(man.distance(y)) > 1e-8:
        raise ValueError("base point is off the manifold")
    if np.linalg.norm(y - man.anchor) > man.validity_radius + 1e-12:
        raise ValueError("base point is outside the validity radius")
    H = man.cov_hess(y)
    f = p.objective.value
    worst = 0.0
    for u in tangent_basis(man, y).T:
        f0 = float(f(man.project(y)))
        fp = float(f(man.project(y + h * u)))
        fm = float(f(man.project(y - h * u)))
        second = (fp + fm - 2.0 * f0) / h ** 2
        worst = max(worst, abs(second - float(u @ H @ u)))
    return worst


def epigraph_instance(p: ProblemInstance) -> ProblemInstance:
    """Lift a function instance to the set instance given by its epigraph,
    paired with the graph of the restriction to the manifold.

    The lifted manifold map is the graph retraction X = (x, r) ->
    (P_M(x), f(P_M(x))), which is idempotent and lands on the graph; distances
    are measured through it.
    """
    if p.kind != "function" or p.manifold is None:
        raise ValueError("epigraph lift requires a function instance with a manifold")
    obj, man = p.objective, p.manifold
    d = p.dimension
    anchor = np.concatenate([man.anchor, [float(obj.value(man.anchor))]])

    def split(X):
        X = np.asarray(X, dtype=float)
        return X[:d], X[d]

    def in_domain(X):
        X, single = _as_batch(X)
        vals = np.asarray(obj.value(X[:, :d]), dtype=float)
        return _unbatch(X[:, d] >= vals - _MEMBERSHIP_TOL, single)

    def value(X):
        X, single = _as_batch(X)
        ok = X[:, d] >= np.asarray(obj.value(X[:, :d]), dtype=float) - _MEMBERSHIP_TOL
        return _unbatch(np.where(ok, 0.0, np.inf), single)

    def project(X):
        X, single = _as_batch(X)
        ys = np.atleast_2d(man.project(X[:, :d]))
        vals = np.atleast_1d(np.asarray(obj.value(ys), dtype=float))
        return _unbatch(np.column_stack([ys, vals]), single)

    def lifted_tangent_projector(ybase):
        y = np.asarray(ybase, dtype=float)[:d]
        B = tangent_basis(man, y)
        g = np.asarray(man.cov_grad(y), dtype=float)
        lifted = np.vstack([B, (g @ B)[None, :]])
        Q, _ = np.linalg.qr(lifted)
        return Q @ Q.T

    def tangent_project(ybase, w):
        P = lifted_tangent_projector(ybase)
        w, single = _as_batch(w)
        return _unbatch(w @ P.T, single)

    def distance(X):
        X, single = _as_batch(X)
        proj = np.atleast_2d(project(X))
        return _unbatch(np.linalg.norm(X - proj, axis=1), single)

    def normals(X):
        x, r = split(X)
        fval = float(obj.value(x))
        if r > fval + _MEMBERSHIP_TOL:
            return np.zeros((0, d + 1))
        gens = p.subgrad_extremes(x) if p.subgrad_extremes is not None \
            else np.atleast_2d(obj.subgrad(x))
        lifted = np.column_stack([gens, -np.ones(len(gens))])
        return lifted / np.linalg.norm(lifted, axis=1, keepdims=True)

    def boundary_sampler(rng, radius):
        z = rng.standard_normal(d)
        z /= max(np.linalg.norm(z), 1e-300)
        x = man.anchor + radius * z
        return np.concatenate([x, [float(obj.value(x))]])

    lifted_man = ManifoldOracle(
        project=project, tangent_project=tangent_project,
        cov_grad=lambda y: np.zeros(d + 1),
        cov_hess=lambda y: np.zeros((d + 1, d + 1)),
        distance=distance, anchor=anchor, validity_radius=man.validity_radius)
    lifted_obj = ObjectiveOracle(
        dimension=d + 1, value=value,
        subgrad=lambda X: np.zeros_like(np.asarray(X, dtype=float)),
        in_domain=in_domain)
    return ProblemInstance(
        objective=lifted_obj, manifold=lifted_man,
        classification=Classification.NON_REGULAR_EXAMPLE,
        label=p.label + "-epi", kind="set",
        normal_generators=normals, boundary_sampler=boundary_sampler,
        notes=f"epigraph of {p.label} along the graph of its manifold restriction")
