import numpy as np
import pytest

from holojet.invariants import (
    NonAffineConnectionError,
    has_enough_conservation_laws,
    invariance_constraints,
    invariant_fibre,
    residual_check,
)
from holojet.multiindex import JetLayout
from holojet.transport import jet_of_section, transport


def lay(scene, k):
    return JetLayout(scene.bundle.base.names, scene.bundle.fibre_names, k)


@pytest.mark.parametrize("k,dim,total", [(0, 1, 1), (1, 2, 3), (2, 3, 6), (3, 4, 10)])
def test_circles_fibre_dimensions_off_origin(circles, k, dim, total):
    fib = invariant_fibre(circles.connection, (1.0, 0.0), k)
    assert (fib.dimension, fib.jet_dim) == (dim, total)


def test_circles_fibre_at_origin_is_larger(circles):
    # the rotation vanishes at 0, so only the rotation of the derivative array constrains
    fib = invariant_fibre(circles.connection, (0.0, 0.0), 2)
    assert fib.dimension == 4


def test_invariant_sections_have_invariant_jets(circles):
    c = circles.connection
    fib = invariant_fibre(c, (0.6, -0.8), 3)
    j = jet_of_section("(x^2 + y^2)^2 - 3*(x^2 + y^2)", lay(circles, 3), (0.6, -0.8))
    assert fib.contains(j.jets)
    assert residual_check(c, j) == pytest.approx(0.0, abs=1e-12)
    assert residual_check(c, jet_of_section("x", lay(circles, 1), (1.0, 0.0))) == 0.0
    assert residual_check(c, jet_of_section("x", lay(circles, 2), (1.0, 0.0))) == pytest.approx(1.0)


def test_basis_points_are_invariant(twisted):
    c = twisted.connection
    fib = invariant_fibre(c, (0.3, 1.1), 2)
    for jp in fib.basis_points():
        assert residual_check(c, jp) <= 1e-10
    assert len(fib.basis) == fib.dimension + 1


def test_invariant_jets_stay_invariant_under_transport(twisted):
    c, p = twisted.connection, twisted.path("quarter")
    fib = invariant_fibre(c, p.start, 2)
    j = fib.point(np.linspace(-1, 1, fib.dimension))
    out = transport(c, p, j, tol=1e-11)
    assert residual_check(c, out) <= 1e-7


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_germfol_left_side_is_unconstrained(germfol, k):
    fib = invariant_fibre(germfol.connection, (-0.5,), k)
    assert fib.dimension == fib.jet_dim
    assert invariance_constraints(germfol.connection, (-0.5,), k).nonzero_rows() == []


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_germfol_right_side_only_constants(germfol, k):
    fib = invariant_fibre(germfol.connection, (0.5,), k)
    assert fib.dimension == 1


def test_constraint_rows_are_labelled(circles):
    rows = invariance_constraints(circles.connection, (1.0, 0.0), 1).format_rows()
    assert rows == ["[R:f] -1*f_y = 0"]  # y*f_x - x*f_y at (1, 0)


def test_regular_lift_ties_value_to_slope(regular):
    fib = invariant_fibre(regular.connection, (0.0, 0.0), 1)
    assert fib.dimension == 2
    assert fib.contains([1.0, 1.0, 5.0]) and not fib.contains([1.0, 0.0, 0.0])


def test_empty_fibre_message():
    from holojet.scene import parse_scene

    sc = parse_scene(
        "chart { dim 1; names x; box -1..1 }\n"
        "bundle { fibre 1; names f; box -5..5 }\n"
        "foliation { gen X = x; }\n"
        "connection { lift X = x | 1; }\n"
    )
    fib = invariant_fibre(sc.connection, (0.0,), 1)
    assert fib.empty and fib.dimension == -1
    assert fib.message == "no conservation laws of order 1 at (0.0,)"
    rep = has_enough_conservation_laws(sc.connection, [[0.0], [0.5]], 1)
    assert not rep.ok and rep.method == "affine"


def test_enough_laws_on_circles(circles):
    rep = has_enough_conservation_laws(circles.connection, [[1.0, 0.0], [0.0, 0.0], [0.3, 0.2]], 2)
    assert rep.ok and rep.dims == [3, 4, 3]


def test_non_affine_connection_uses_least_squares(ysquared):
    with pytest.raises(NonAffineConnectionError):
        invariant_fibre(ysquared.connection, (0.0,), 1)
    rep = has_enough_conservation_laws(ysquared.connection, [[0.0]], 1)
    assert rep.ok and rep.method == "nonlinear least squares"
    assert rep.dims == [1]


def test_point_outside_chart(circles):
    with pytest.raises(ValueError):
        invariant_fibre(circles.connection, (5.0, 0.0), 1)
