"""Problem-zoo oracles: worked examples, manifold invariants, spectral lifts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlescape.problems import (Classification, covariant_consistency,
                                  epigraph_instance, get_problem,
                                  restricted_hessian, spectral_lift, sym_eig,
                                  tangent_basis, tilt, zoo_labels)

from conftest import random_points_in_validity_ball


def vec(*xs):
    return np.array(xs, dtype=float)


# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------


def test_zoo_has_expected_members(zoo):
    assert zoo_labels() == ["Z1", "Z2", "Z3", "Z4", "Z5", "Z6", "Z7"]
    assert zoo["Z1"].classification is Classification.ACTIVE_STRICT_SADDLE
    assert zoo["Z2"].classification is Classification.LOCAL_MIN
    for label in ("Z3", "Z4", "Z5"):
        assert zoo[label].classification is Classification.NON_REGULAR_EXAMPLE
        assert zoo[label].kind == "set"
    assert zoo["Z6"].classification is Classification.ACTIVE_STRICT_SADDLE
    assert zoo["Z7"].classification is Classification.LOCAL_MIN


def test_z1_values_and_subgradients(z1):
    assert z1.objective.value(vec(0.5, 0.3)) == pytest.approx(0.41, abs=1e-12)
    np.testing.assert_allclose(z1.objective.subgrad(vec(0.5, 0.3)), [1.0, -0.6])
    np.testing.assert_allclose(z1.manifold.project(vec(0.5, 0.3)), [0.0, 0.3])
    assert z1.manifold.distance(vec(0.5, 0.3)) == pytest.approx(0.5, abs=1e-12)


def test_z1_is_a_strict_saddle_of_the_restriction(z1):
    H = restricted_hessian(z1, np.zeros(2))
    assert H.shape == (1, 1)
    assert H[0, 0] == pytest.approx(-2.0, abs=1e-12)


def test_classification_matches_restricted_hessian(zoo):
    for p in zoo.values():
        if p.classification is Classification.NON_REGULAR_EXAMPLE:
            continue
        H = restricted_hessian(p, p.manifold.anchor)
        eigs = np.linalg.eigvalsh(H)
        if p.classification is Classification.ACTIVE_STRICT_SADDLE:
            assert eigs.min() < 0
        else:
            assert eigs.min() >= -1e-12


def test_kink_selection_is_the_midpoint(z1):
    np.testing.assert_allclose(z1.objective.subgrad(vec(0.0, 1.0)), [0.0, -2.0])


def test_extreme_subgradients_at_the_kink(z1):
    ext = z1.subgrad_extremes(vec(0.0, 0.2))
    assert ext.shape == (2, 2)
    np.testing.assert_allclose(sorted(ext[:, 0]), [-1.0, 1.0])


# ---------------------------------------------------------------------------
# manifold oracle invariants (1000 random points per instance)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("label", ["Z1", "Z2", "Z3", "Z4", "Z5", "Z6", "Z7"])
def test_projection_idempotence_and_distance(label):
    p = get_problem(label)
    man = p.manifold
    pts = random_points_in_validity_ball(p, 1000, seed=42)
    proj = np.atleast_2d(man.project(pts))
    proj2 = np.atleast_2d(man.project(proj))
    assert np.abs(proj2 - proj).max() <= 1e-10
    dist = np.atleast_1d(man.distance(pts))
    assert np.abs(dist - np.linalg.norm(pts - proj, axis=1)).max() <= 1e-10


@pytest.mark.parametrize("label", ["Z1", "Z2", "Z3", "Z4", "Z5", "Z6", "Z7"])
def test_tangent_projector_is_an_orthogonal_projector(label):
    p = get_problem(label)
    man = p.manifold
    gen = np.random.default_rng(7)
    y = man.anchor
    d = p.dimension
    P = np.column_stack([man.tangent_project(y, e) for e in np.eye(d)])
    assert np.linalg.norm(P @ P - P) <= 1e-10
    assert np.linalg.norm(P - P.T) <= 1e-10
    assert np.linalg.norm(P, ord=2) <= 1.0 + 1e-10
    for _ in range(20):
        u, w = gen.standard_normal(d), gen.standard_normal(d)
        lhs = float(man.tangent_project(y, u) @ w)
        rhs = float(u @ man.tangent_project(y, w))
        assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("label", ["Z1", "Z2", "Z6", "Z7"])
def test_cov_grad_lies_in_the_tangent_space(label):
    p = get_problem(label)
    man = p.manifold
    B = tangent_basis(man, man.anchor)
    gen = np.random.default_rng(3)
    for _ in range(50):
        coeff = 0.3 * man.validity_radius * gen.standard_normal(B.shape[1])
        y = man.anchor + B @ coeff
        g = np.asarray(man.cov_grad(y), dtype=float)
        np.testing.assert_allclose(man.tangent_project(y, g), g, atol=1e-12)


def test_values_are_finite_on_the_domain(zoo):
    for p in zoo.values():
        pts = random_points_in_validity_ball(p, 200, seed=5)
        ok = np.atleast_1d(p.objective.in_domain(pts))
        vals = np.atleast_1d(p.objective.value(pts))
        assert np.isfinite(vals[ok]).all()


def test_off_domain_value_is_the_infinity_sentinel(zoo):
    z3 = zoo["Z3"]
    outside = vec(0.0, 0.5, 0.0)   # below the parabolic face
    assert not z3.objective.in_domain(outside)
    assert z3.objective.value(outside) == math.inf


def test_declared_lipschitz_bounds_hold_on_the_unit_ball(zoo):
    gen = np.random.default_rng(11)
    for p in zoo.values():
        bound = p.objective.lipschitz_bound
        if bound is None or p.kind == "set":
            continue
        anchor = p.manifold.anchor
        for _ in range(200):
            x = anchor + gen.uniform(-1, 1, p.dimension) / math.sqrt(p.dimension)
            g = np.asarray(p.objective.subgrad(x), dtype=float)
            assert np.linalg.norm(g) <= bound + 1e-9


# ---------------------------------------------------------------------------
# sharpness and the subgradient inequality
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("label", ["Z1", "Z2", "Z6"])
def test_sharpness_ratio_near_the_anchor(label):
    p = get_problem(label)
    man = p.manifold
    gen = np.random.default_rng(17)
    f = p.objective.value
    for _ in range(500):
        x = man.anchor + 0.1 * gen.standard_normal(p.dimension)
        dist = float(man.distance(x))
        if dist < 1e-9:
            continue
        ratio = (float(f(x)) - float(f(man.project(x)))) / dist
        assert ratio >= 0.5


def test_subgradient_inequality_for_the_convex_part():
    # |x1| alone: exact first-order minorant at every pair
    gen = np.random.default_rng(23)
    for _ in range(500):
        x, y = gen.standard_normal(2), gen.standard_normal(2)
        v = np.array([np.sign(x[0]), 0.0])
        assert abs(y[0]) >= abs(x[0]) + v @ (y - x) - 1e-12


def test_z2_is_globally_convex(z2):
    gen = np.random.default_rng(29)
    f = z2.objective.value
    for _ in range(500):
        x, y = gen.standard_normal(2), gen.standard_normal(2)
        v = np.asarray(z2.objective.subgrad(x), dtype=float)
        assert float(f(y)) >= float(f(x)) + float(v @ (y - x)) - 1e-10


# ---------------------------------------------------------------------------
# tilts
# ---------------------------------------------------------------------------


def test_zero_tilt_is_the_identity(z1):
    zt = tilt(z1, vec(0.0, 0.0))
    gen = np.random.default_rng(31)
    for _ in range(100):
        x = gen.standard_normal(2)
        assert float(zt.objective.value(x)) == float(z1.objective.value(x))
        np.testing.assert_array_equal(zt.objective.subgrad(x),
                                      z1.objective.subgrad(x))


def test_tilt_shifts_the_subgradient(z2):
    zt = tilt(z2, vec(0.1, 0.0))
    np.testing.assert_allclose(zt.objective.subgrad(vec(0.5, 0.0)), [0.9, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_tilt_value_identity(vals):
    z1 = get_problem("Z1")
    v, x = np.array(vals[:2]), np.array(vals[2:])
    zt = tilt(z1, v)
    lhs = float(zt.objective.value(x)) + float(v @ x)
    assert lhs == pytest.approx(float(z1.objective.value(x)), abs=1e-9)


def test_tilt_shifts_the_covariant_gradient(z1):
    v = vec(0.3, 0.4)
    zt = tilt(z1, v)
    y = vec(0.0, 0.2)
    base = np.asarray(z1.manifold.cov_grad(y), dtype=float)
    shifted = np.asarray(zt.manifold.cov_grad(y), dtype=float)
    np.testing.assert_allclose(shifted, base - np.array([0.0, 0.4]), atol=1e-12)


def test_tilt_rejects_dimension_mismatch(z1):
    with pytest.raises(ValueError):
        tilt(z1, vec(1.0, 2.0, 3.0))


# ---------------------------------------------------------------------------
# spectral lifts
# ---------------------------------------------------------------------------


def orthant_project(v):
    return np.maximum(v, 0.0)


def test_spectral_lift_diagonal_case():
    lift = spectral_lift(orthant_project, 2)
    np.testing.assert_allclose(lift.project(np.diag([2.0, -0.5])),
                               np.diag([2.0, 0.0]), atol=1e-12)


def test_spectral_lift_hand_eigendecomposition():
    # X = [[0,1],[1,0]] has eigenpairs (1, (1,1)/sqrt2), (-1, (1,-1)/sqrt2);
    # clipping the negative eigenvalue leaves the rank-one projector
    lift = spectral_lift(orthant_project, 2)
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(lift.project(X), 0.5 * np.ones((2, 2)), atol=1e-12)
    assert lift.distance(X) == pytest.approx(1.0, abs=1e-12)


def test_spectral_lift_idempotence_random():
    gen = np.random.default_rng(37)
    lift = spectral_lift(orthant_project, 3)
    for _ in range(50):
        A = gen.standard_normal((3, 3))
        X = (A + A.T) / 2.0
        P1 = lift.project(X)
        P2 = lift.project(P1)
        assert np.abs(P2 - P1).max() <= 1e-9


def test_spectral_lift_norm_identity():
    gen = np.random.default_rng(41)
    for n in (2, 3):
        lift = spectral_lift(orthant_project, n)
        for _ in range(100):
            A = gen.standard_normal((n, n))
            X = (A + A.T) / 2.0
            lhs = np.linalg.norm(X - lift.project(X), ord="fro")
            assert lhs == pytest.approx(lift.distance(X), abs=1e-8)


def test_spectral_lift_matches_brute_force_grid():
    # the lifted orthant in S^2 is the PSD cone; scan a coarse grid of PSD
    # matrices for anything closer than the closed form
    lift = spectral_lift(orthant_project, 2)
    gen = np.random.default_rng(43)
    grid = np.linspace(-2.0, 2.0, 41)
    for _ in range(5):
        A = gen.standard_normal((2, 2))
        X = (A + A.T) / 2.0
        best = np.inf
        for a in grid:
            for c in grid:
                if a < 0 or c < 0:
                    continue
                bmax = math.sqrt(a * c)
                for b in np.linspace(-bmax, bmax, 21):
                    Y = np.array([[a, b], [b, c]])
                    best = min(best, np.linalg.norm(X - Y, ord="fro"))
        closed = np.linalg.norm(X - lift.project(X), ord="fro")
        assert closed <= best + 1e-9


def test_spectral_lift_rejects_nonsymmetric():
    lift = spectral_lift(orthant_project, 2)
    with pytest.raises(ValueError):
        lift.project(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_spectral_lift_rejects_bad_size():
    with pytest.raises(ValueError):
        spectral_lift(orthant_project, 4)


def test_sym_eig_is_deterministic_and_sorted():
    gen = np.random.default_rng(47)
    for n in (2, 3):
        for _ in range(50):
            A = gen.standard_normal((n, n))
            X = (A + A.T) / 2.0
            vals, U = sym_eig(X)
            assert (np.diff(vals) <= 1e-12).all()
            np.testing.assert_allclose(U @ np.diag(vals) @ U.T, X, atol=1e-10)
            vals2, U2 = sym_eig(X.copy())
            np.testing.assert_array_equal(vals, vals2)
            np.testing.assert_array_equal(U, U2)


# ---------------------------------------------------------------------------
# covariant consistency
# ---------------------------------------------------------------------------


def test_z7_prox_satisfies_stationarity():
    # y = prox_{a h}(x) iff (x - y)/a is a subgradient of h = ||.||_1 at y:
    # equal to sign(y) on nonzero coordinates, inside [-1, 1] at zeros
    z7 = get_problem("Z7")
    gen = np.random.default_rng(59)
    for _ in range(200):
        x = gen.uniform(-2, 2, 2)
        a = 10.0 ** gen.uniform(-3, 0)
        y = np.asarray(z7.objective.prox(x, a), dtype=float)
        resid = (x - y) / a
        for i in range(2):
            if y[i] != 0.0:
                assert abs(resid[i] - np.sign(y[i])) <= 1e-10
            else:
                assert abs(resid[i]) <= 1.0 + 1e-10


def test_covariant_consistency_z1(z1):
    assert covariant_consistency(z1, np.zeros(2), 1e-3) <= 1e-5


def test_covariant_consistency_z2(z2):
    # second difference of t -> t^2 is exactly +2
    assert covariant_consistency(z2, np.zeros(2), 1e-3) <= 1e-9


def test_covariant_consistency_z6_with_h_refinement():
    z6 = get_problem("Z6")
    residuals = [covariant_consistency(z6, np.zeros(3), h) for h in (1e-2, 1e-3)]
    assert max(residuals) <= 1e-4


def test_covariant_consistency_rejects_off_manifold(z1):
    with pytest.raises(ValueError):
        covariant_consistency(z1, vec(0.3, 0.0), 1e-3)
    with pytest.raises(ValueError):
        covariant_consistency(z1, np.zeros(2), 0.5)


# ---------------------------------------------------------------------------
# serialization and the epigraph lift
# ---------------------------------------------------------------------------


def test_metadata_serializes(zoo):
    import json
    for p in zoo.values():
        meta = json.loads(p.metadata_json())
        assert meta["label"] == p.label
        assert meta["dimension"] == p.dimension
        assert meta["classification"] == p.classification.value
        assert meta["validity_radius"] > 0


@settings(max_examples=150, deadline=None)
@given(st.tuples(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(-0.5, 0.8)))
def test_z3_projection_properties(q):
    z3 = get_problem("Z3")
    proj = z3.objective.project_constraint
    q = np.array(q, dtype=float)
    y = np.asarray(proj(q), dtype=float)
    assert bool(z3.objective.in_domain(y))
    # idempotent on the result
    np.testing.assert_allclose(proj(y), y, atol=1e-9)
    # no sampled point of the set is closer than the claimed projection
    d = np.linalg.norm(y - q)
    gen = np.random.default_rng(abs(hash(tuple(q))) % (2 ** 32))
    for _ in range(40):
        a, b = gen.uniform(-1.2, 1.2, 2)
        floor = max(0.0, b - a * a)
        cand = np.array([a, b, floor + gen.uniform(0.0, 0.3)])
        assert np.linalg.norm(cand - q) >= d - 1e-9


def test_z3_projection_fixes_points_of_the_set():
    z3 = get_problem("Z3")
    proj = z3.objective.project_constraint
    gen = np.random.default_rng(61)
    for _ in range(100):
        x = z3.boundary_sampler(gen, 0.3 * (0.2 + gen.random()))
        np.testing.assert_allclose(proj(x), x, atol=1e-12)


def test_epigraph_lift_of_z1_has_aligned_normals(z1):
    epi = epigraph_instance(z1)
    gen = np.random.default_rng(53)
    for _ in range(100):
        X = epi.boundary_sampler(gen, 0.2)
        assert bool(epi.objective.in_domain(X))
        y = epi.manifold.project(X)
        for nrm in epi.normal_generators(X):
            resid = np.linalg.norm(epi.manifold.tangent_project(y, nrm))
            assert resid <= 1e-10
