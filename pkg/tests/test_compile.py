import numpy as np
import pytest

from holojet import _backend
from holojet.compile import Program
from holojet.symexpr import DomainError, evaluate, parse_expr

TEXTS = ["x^2*y - 3", "sin(x)*exp(y)", "bump(x; -1, 1)*y", "log(1 + x^2)/(2 + cos(y))", "(1 + x^2)^(1/2)"]


def test_program_matches_tree_evaluation():
    exprs = [parse_expr(t) for t in TEXTS]
    prog = Program(exprs, ["x", "y"])
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, (50, 2))
    out = prog.batch(X)
    for r, (px, py) in enumerate(X):
        want = [evaluate(e, {"x": px, "y": py}) for e in exprs]
        np.testing.assert_allclose(out[r], want, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("backend", _backend.available())
def test_backends_agree(backend):
    exprs = [parse_expr(t) for t in TEXTS]
    ref = Program(exprs, ["x", "y"], backend="python")
    prog = Program(exprs, ["x", "y"], backend=backend)
    X = np.random.default_rng(2).uniform(-2, 2, (200, 2))
    np.testing.assert_allclose(prog.batch(X), ref.batch(X), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("backend", _backend.available())
def test_domain_error_is_raised_by_every_backend(backend):
    prog = Program([parse_expr("log(x)")], ["x"], backend=backend)
    with pytest.raises(DomainError):
        prog.batch(np.array([[1.0], [-1.0]]))


def test_single_point_call_shape():
    prog = Program([parse_expr("x + y"), parse_expr("x*y")], ["x", "y"])
    assert prog(np.array([2.0, 3.0])).tolist() == [5.0, 6.0]
    assert prog.n_in == 2 and prog.n_out == 2


def test_environment_variable_forces_python_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, HOLOJET_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import holojet; print(holojet.BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"
