import math

import numpy as np
import pytest
from scipy.integrate import quad

from holojet.flow import (
    BlowupError,
    DomainExitError,
    MaxStepsError,
    Segment,
    concatenate,
    constant_path,
    exposure,
    integrate,
    invert,
    make_path,
    window,
)
from holojet.symexpr import evaluate, parse_expr


def test_constant_field_endpoint():
    res = integrate([parse_expr("1")], [0.0], 0.0, 1.0, coords=["x"])
    assert res.endpoint[0] == pytest.approx(1.0, abs=1e-12)


def test_rotation_matches_closed_form():
    res = integrate([parse_expr("-y"), parse_expr("x")], [1.0, 0.0], 0.0, math.pi / 2, tol=1e-11, coords=["x", "y"])
    np.testing.assert_allclose(res.endpoint, [0.0, 1.0], atol=1e-9)


def test_backward_integration_inverts_forward():
    f = [parse_expr("sin(x) + y"), parse_expr("-x*y")]
    fwd = integrate(f, [0.3, 0.2], 0.0, 1.0, tol=1e-11, coords=["x", "y"])
    back = integrate(f, fwd.endpoint, 1.0, 0.0, tol=1e-11, coords=["x", "y"])
    np.testing.assert_allclose(back.endpoint, [0.3, 0.2], atol=1e-9)


def test_dense_output_tracks_exact_solution():
    res = integrate([parse_expr("x")], [1.0], 0.0, 2.0, tol=1e-11, coords=["x"])
    for s in np.linspace(0, 2, 11):
        assert res(s)[0] == pytest.approx(math.exp(s), rel=1e-7)


def test_callable_field_and_batched_state():
    rhs = lambda t, y: -y
    res = integrate(rhs, np.array([1.0, 2.0, 3.0]), 0.0, 1.0, tol=1e-11)
    np.testing.assert_allclose(res.endpoint, np.array([1.0, 2.0, 3.0]) * math.exp(-1), rtol=1e-9)


def test_blowup_is_detected_before_singularity():
    with pytest.raises(BlowupError) as info:
        integrate([parse_expr("x^2")], [1.0], 0.0, 2.0, coords=["x"])
    assert 0.9 < info.value.t <= 1.0 + 1e-6
    assert info.value.partial is not None


def test_box_exit_time_is_located():
    with pytest.raises(DomainExitError) as info:
        integrate([parse_expr("1")], [0.0], 0.0, 5.0, box=[(-1, 1)], coords=["x"])
    assert info.value.t == pytest.approx(1.0, abs=1e-9)


def test_step_budget():
    with pytest.raises(MaxStepsError):
        integrate([parse_expr("-50*x")], [1.0], 0.0, 100.0, max_steps=5, coords=["x"])


def test_window_is_flat_near_both_ends():
    w = window(1.0, 0.1)
    for s in [0.0, 0.04, 0.96, 1.0, 1.5]:
        assert evaluate(w, {"t": s}) == 0.0
    assert evaluate(w, {"t": 0.5}) == 1.0


@pytest.mark.parametrize("d,eps", [(1.0, 0.1), (2.0, 0.3), (1.5, 0.05)])
def test_exposure_closed_form(d, eps):
    w = window(d, eps)
    num, _ = quad(lambda s: evaluate(w, {"t": s}), 0, d, points=[eps / 2, eps, d - eps, d - eps / 2], epsabs=1e-13)
    assert exposure(d, eps) == pytest.approx(num, abs=1e-10)


def test_segment_margin_bounds():
    with pytest.raises(ValueError):
        Segment((parse_expr("1"),), 1.0, 0.3)


def test_quarter_rotation_path(circles, rotate):
    p = rotate(circles, (1.0, 0.0), math.pi / 2)
    np.testing.assert_allclose(p.end, [0.0, 1.0], atol=1e-8)


def test_paths_sit_still_near_endpoints(circles, rotate):
    p = rotate(circles, (1.0, 0.0), 1.0)
    np.testing.assert_array_equal(p.field_at(0.01, p.start), [0.0, 0.0])
    np.testing.assert_array_equal(p.field_at(0.99, p.end), [0.0, 0.0])


def test_concatenation_runs_second_path_first(circles, rotate):
    q1 = rotate(circles, (1.0, 0.0), math.pi / 2)
    q2 = rotate(circles, q1.end, math.pi / 2)
    qq = concatenate(q2, q1)
    assert qq.start == q1.start
    np.testing.assert_allclose(qq.end, [-1.0, 0.0], atol=1e-8)
    assert qq.duration == pytest.approx(2.0)
    with pytest.raises(ValueError):
        concatenate(q1, q1)


def test_inverse_path_returns_to_start(circles, rotate):
    p = make_path(circles.foliation, (1.0, 0.0), 1.5, 0.1, {"R": "0.8 + 0.5*sin(3*t) + 0.2*x"})
    back = invert(p).retrace(1e-10)
    np.testing.assert_allclose(back.end, p.start, atol=1e-8)
    assert invert(invert(p)).segments == p.segments


def test_constant_path_does_not_move(circles):
    p = constant_path(circles.foliation, (0.3, 0.4))
    assert p.end == (0.3, 0.4)


def test_start_outside_chart_is_rejected(circles):
    with pytest.raises(DomainExitError):
        make_path(circles.foliation, (3.0, 0.0), 1.0)


def test_unknown_generator_in_coefficients(circles):
    with pytest.raises(KeyError):
        make_path(circles.foliation, (1.0, 0.0), 1.0, coeffs={"Q": 1})
