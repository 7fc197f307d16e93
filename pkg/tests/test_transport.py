import math

import numpy as np
import pytest

from _gen import random_leaf_path, random_section
from holojet.flow import concatenate, invert, make_path
from holojet.multiindex import JetLayout
from holojet.transport import JetPoint, fd_oracle, jet_of_section, transport, transport_many, transport_ode


def layout(scene, k):
    B = scene.bundle
    return JetLayout(B.base.names, B.fibre_names, k)


def test_jet_of_section_values(circles):
    j = jet_of_section("x^2*y + 3*y", layout(circles, 2), (1.0, 2.0))
    m = j.as_mapping()
    assert (m["f"], m["f_x"], m["f_y"]) == (8.0, 4.0, 4.0)
    assert (m["f_xx"], m["f_xy"], m["f_yy"]) == (4.0, 2.0, 0.0)


def test_jet_point_round_trip_and_truncation(circles):
    lay = layout(circles, 2)
    j = JetPoint.from_mapping(lay, (1.0, 0.0), {"f": 2.0, "f_xy": 1.0})
    assert JetPoint.from_array(lay, j.array) == j
    assert j.truncate(1).jets == (2.0, 0.0, 0.0)
    with pytest.raises(KeyError):
        JetPoint.from_mapping(lay, (1.0, 0.0), {"g": 1.0})


def test_quarter_rotation_rotates_gradient(circles):
    p = circles.path("quarter")
    lay = layout(circles, 1)
    j = JetPoint.from_mapping(lay, (1.0, 0.0), {"f": 0.7, "f_x": 0.4})
    out = transport(circles.connection, p, j, tol=1e-11)
    np.testing.assert_allclose(out.x, (0.0, 1.0), atol=1e-9)
    np.testing.assert_allclose(out.jets, (0.7, 0.0, 0.4), atol=1e-8)


def test_scaling_transport_closed_form(scaling):
    p = scaling.path("double")
    lay = layout(scaling, 2)
    j = jet_of_section("x^2", lay, (1.0,))
    out = transport(scaling.connection, p, j, tol=1e-11)
    # the dilation x -> 2x carries x^2 to x^2/4
    np.testing.assert_allclose(out.x, (2.0,), atol=1e-9)
    np.testing.assert_allclose(out.jets, (1.0, 1.0, 0.5), atol=1e-8)


def test_regular_lift_multiplies_by_exponential(regular):
    p = regular.path("shift_slow")
    j = jet_of_section("1 + x*y", layout(regular, 1), p.start)
    out = transport(regular.connection, p, j, tol=1e-11)
    # f' = f along the flow of d/dx + f d/df with exposure 1
    np.testing.assert_allclose(out.jets, np.array(j.jets) * math.e, rtol=1e-8)


def test_transport_path_history(circles):
    p = circles.path("half")
    j = jet_of_section("x", layout(circles, 1), (1.0, 0.0))
    jp = transport_ode(circles.connection, p, j, tol=1e-10)
    assert jp.t[0] == 0.0 and jp.t[-1] == pytest.approx(1.0)
    radii = np.hypot(*jp.base_trajectory().T)
    np.testing.assert_allclose(radii, 1.0, atol=1e-8)
    head = jp.to_csv().splitlines()[0]
    assert head == "t,x,y,f,f_x,f_y"


def test_start_mismatch_is_rejected(circles):
    j = jet_of_section("x", layout(circles, 1), (0.5, 0.0))
    with pytest.raises(ValueError):
        transport(circles.connection, circles.path("quarter"), j)


def test_batched_rows_match_single_transport(twisted):
    c, p = twisted.connection, twisted.path("loop")
    lay = layout(twisted, 2)
    rng = np.random.default_rng(4)
    J = np.hstack([np.tile(p.start, (5, 1)), rng.uniform(-1, 1, (5, lay.jet_dim))])
    batch = transport_many(c, p, J, 2, 1e-11)
    for row, out in zip(J, batch):
        single = transport(c, p, JetPoint.from_array(lay, row), tol=1e-11)
        np.testing.assert_allclose(single.array, out, atol=1e-8)


def test_composition_is_sequential_transport(twisted):
    c = twisted.connection
    q = twisted.path("quarter")
    q2 = make_path(c, q.end, 1.0, coeffs={"R": 0.9})
    j = jet_of_section("x*y + 0.3", layout(twisted, 2), q.start)
    two = transport(c, q2, transport(c, q, j, tol=1e-11), tol=1e-11)
    one = transport(c, concatenate(q2, q), j, tol=1e-11)
    assert one.distance(two) <= 1e-9


def test_inverse_undoes_transport(twisted):
    c, q = twisted.connection, twisted.path("quarter")
    j = jet_of_section("x^2 - y", layout(twisted, 2), q.start)
    back = transport(c, invert(q), transport(c, q, j, tol=1e-11), tol=1e-11)
    assert back.distance(j) <= 1e-8


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("scene", ["circles", "scaling", "twisted"])
def test_ode_agrees_with_flow_composition_oracle(scene, k, request):
    sc = request.getfixturevalue(scene)
    rng = np.random.default_rng(100 + k)
    p = random_leaf_path(rng, sc)
    sigma = random_section(rng, sc.chart.names)
    j = jet_of_section(sigma, layout(sc, k), p.start)
    ode = transport(sc.connection, p, j, tol=1e-11)
    fd = fd_oracle(sc.connection, p, sigma, k)
    assert ode.distance(fd) <= 1e-6


def test_oracle_refuses_high_order(circles):
    with pytest.raises(ValueError):
        fd_oracle(circles.connection, circles.path("quarter"), "x", 3)
