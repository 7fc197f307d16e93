import numpy as np
import pytest

from holojet.flow import make_path
from holojet.holonomy import (
    DISTINCT,
    EQUIVALENT,
    INCONCLUSIVE,
    groupoid_laws_check,
    hierarchy_check,
    holonomy_equivalent,
    monotonicity_violations,
    probe_jets,
)


def test_probe_count_and_invariance(circles):
    J, desc = probe_jets(circles.connection, (1.0, 0.0), 2, n_random=8, seed=0)
    assert J.shape == (3 + 1 + 8, 2 + 6)
    assert "seed 0" in desc
    J2, _ = probe_jets(circles.connection, (1.0, 0.0), 2, n_random=8, seed=0)
    np.testing.assert_array_equal(J, J2)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_circles_loop_equals_constant(circles, k):
    rep = holonomy_equivalent(circles.connection, circles.path("loop"), circles.path("const"), k)
    assert rep.verdict == EQUIVALENT
    assert rep.max_discrepancy <= 1e-6


def test_different_endpoints_are_distinct(circles):
    rep = holonomy_equivalent(circles.connection, circles.path("quarter"), circles.path("half"), 1)
    assert rep.verdict == DISTINCT and not rep.range_match
    assert rep.notes == ["ranges differ: different groupoid arrows"]


def test_twisted_loop_separates_orders(twisted):
    rep = hierarchy_check(twisted.connection, twisted.path("loop"), twisted.path("const"), 2)
    assert rep.verdicts == [EQUIVALENT, DISTINCT, DISTINCT]
    assert rep.monotone
    assert rep.reports[1].max_discrepancy == pytest.approx(4 * np.pi * 0.05, rel=1e-4)


def test_reparametrised_paths_are_equivalent(regular):
    rep = hierarchy_check(regular.connection, regular.path("shift"), regular.path("shift_slow"), 2)
    assert rep.verdicts == [EQUIVALENT] * 3


def test_germfol_paths_on_flat_side_are_equivalent(germfol):
    c = germfol.connection
    a = make_path(c, (-1.0,), 1.0, coeffs={"X": 2})
    b = make_path(c, (-1.0,), 2.0, coeffs={"X": "1 + t"})
    assert hierarchy_check(c, a, b, 3).verdicts == [EQUIVALENT] * 4


def test_verdict_hysteresis_band(twisted):
    c, p, q = twisted.connection, twisted.path("loop"), twisted.path("const")
    d = holonomy_equivalent(c, p, q, 1).max_discrepancy
    assert holonomy_equivalent(c, p, q, 1, tol=d / 5).verdict == INCONCLUSIVE
    assert holonomy_equivalent(c, p, q, 1, tol=2 * d).verdict == EQUIVALENT


def test_monotonicity_violation_detection():
    assert monotonicity_violations([EQUIVALENT, EQUIVALENT, DISTINCT]) == []
    assert monotonicity_violations([DISTINCT, EQUIVALENT]) == [(1, 0)]
    assert monotonicity_violations([INCONCLUSIVE, EQUIVALENT]) == []


def test_groupoid_laws_on_circles(circles):
    paths = [circles.path(n) for n in ("quarter", "quarter2", "wobble", "back")]
    rep = groupoid_laws_check(circles.connection, paths, 2, names=["quarter", "quarter2", "wobble", "back"])
    assert rep.passed
    laws = {ch.law for ch in rep.checks}
    assert laws == {"unit", "inverse", "composition"}
    assert ["quarter2", "quarter"] in [ch.paths for ch in rep.checks if ch.law == "composition"]


def test_groupoid_laws_on_twisted(twisted):
    paths = [twisted.path(n) for n in ("quarter", "qback", "loop")]
    rep = groupoid_laws_check(twisted.connection, paths, 2)
    assert rep.passed and rep.max_discrepancy <= 1e-5


def test_report_serialises(twisted):
    rep = holonomy_equivalent(twisted.connection, twisted.path("loop"), twisted.path("const"), 1)
    d = rep.as_dict()
    assert d["verdict"] == DISTINCT and d["order"] == 1 and len(d["discrepancies"]) == 3 + 8
