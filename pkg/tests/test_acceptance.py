"""Acceptance criteria, each at its stated scale and tolerance.

Set SADDLESCAPE_ACCEPT_TIER=fast to run the reduced tier instead (smaller
Monte Carlo sizes, widened tolerances).  Each criterion prints its own
pass/fail line with the measured values.

Criterion 3 is expected to fail: it pins the mean *squared* distance to a
window around -gamma, but on sharp instances the squared distance contracts
into an O(alpha_k) tube and decays at -2*gamma in every noise regime (the
first-power distance, reported alongside, recovers -gamma exactly).  The
assertion is kept as stated rather than weakened; see the analysis note in
saddlescape.acceptance.
"""

import os

from saddlescape import acceptance

TIER = os.environ.get("SADDLESCAPE_ACCEPT_TIER", "full")

_cache: dict[int, object] = {}


def _result(cid: int):
    if cid not in _cache:
        _cache[cid] = acceptance.run_one(cid, TIER)
    res = _cache[cid]
    print(res.line())
    return res


def test_criterion_1_saddle_escape():
    res = _result(1)
    assert res.passed, res.line()


def test_criterion_2_convergence_to_minimizers():
    res = _result(2)
    assert res.passed, res.line()


def test_criterion_3_distance_decay_rate():
    res = _result(3)
    assert res.passed, (
        res.line()
        + "  [expected failure: the mean-square distance on a sharp manifold "
          "decays at -2*gamma; the first-power slopes above sit at -gamma]")


def test_criterion_4_shadow_recursion_exactness():
    res = _result(4)
    assert res.passed, res.line()


def test_criterion_5_error_bound_conformance():
    res = _result(5)
    assert res.passed, res.line()


def test_criterion_6_regularity_regression():
    res = _result(6)
    assert res.passed, res.line()


def test_criterion_7_aiming_constants():
    res = _result(7)
    assert res.passed, res.line()


def test_criterion_8_lyapunov_certificate():
    res = _result(8)
    assert res.passed, res.line()


def test_criterion_9_sequence_lemma_oracles():
    res = _result(9)
    assert res.passed, res.line()


def test_criterion_10_determinism():
    res = _result(10)
    assert res.passed, res.line()
