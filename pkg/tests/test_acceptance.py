"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line (visible even under output
capture) and then asserts the same condition.  Run alone with::

    python3 -m pytest tests/test_acceptance.py -v
"""
import itertools
import math
import subprocess
import sys

import numpy as np
import pytest

from _gen import PLANE_BUNDLE, random_leaf_path, random_projfield, random_rows, random_section, rel_err
from holojet.compile import Program
from holojet.connection import flow_domain_guard, validate_bracket_preserving, validate_right_inverse
from holojet.flow import make_path
from holojet.geometry import proj_bracket
from holojet.holonomy import EQUIVALENT, groupoid_laws_check, hierarchy_check, monotonicity_violations
from holojet.invariants import invariance_constraints, invariant_fibre
from holojet.multiindex import JetLayout
from holojet.prolong import contact_apply, jet_field_bracket, prolong, prolong_direct, vertical_prolong
from holojet.scene import load_scene
from holojet.transport import JetPoint, fd_oracle, jet_of_section, transport, transport_many

N_FIELDS = 20
N_POINTS = 16


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
        assert ok, detail

    return report


@pytest.fixture(scope="module")
def ensemble():
    rng = np.random.default_rng(2024)
    return [random_projfield(rng) for _ in range(N_FIELDS)], rng


def _vals(exprs, layout, pts):
    return Program(list(exprs), layout.coord_names).batch(pts)


def _layout(scene, k):
    return JetLayout(scene.bundle.base.names, scene.bundle.fibre_names, k)


def test_criterion_01_prolongation_recursion_matches_direct(ensemble, verdict):
    fields, _ = ensemble
    rng = np.random.default_rng(1)
    worst = 0.0
    for X in fields:
        for k in (1, 2, 3):
            a, b = prolong(X, k), prolong_direct(X, k)
            pts = random_rows(rng, N_POINTS, a.layout.dim)
            worst = max(worst, rel_err(_vals(a.phi, a.layout, pts), _vals(b.phi, b.layout, pts)))
    verdict(1, "prolongation recursion vs direct", worst <= 1e-9, f"worst rel err {worst:.2e} (tol 1e-9)")


def test_criterion_02_contact_identity(ensemble, verdict):
    fields, _ = ensemble
    rng = np.random.default_rng(2)
    worst = 0.0
    for X in fields:
        for k in (1, 2, 3):
            v, c = vertical_prolong(X, k), contact_apply(prolong(X, k))
            pts = random_rows(rng, N_POINTS, v.layout.dim)
            worst = max(worst, rel_err(_vals(v.phi, v.layout, pts), _vals(c.phi, c.layout, pts)))
    verdict(2, "contact identity", worst <= 1e-9, f"worst rel err {worst:.2e} (tol 1e-9)")


def test_criterion_03_bracket_homomorphism(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        X, Y = random_projfield(rng, PLANE_BUNDLE), random_projfield(rng, PLANE_BUNDLE)
        lhs = prolong(proj_bracket(X, Y), 2)
        rhs = jet_field_bracket(prolong(X, 2), prolong(Y, 2))
        pts = random_rows(rng, N_POINTS, lhs.layout.dim)
        worst = max(worst, rel_err(_vals(lhs.full_components(), lhs.layout, pts), _vals(rhs, lhs.layout, pts)))
    verdict(3, "bracket homomorphism at order 2", worst <= 1e-8, f"worst rel err {worst:.2e} over 10 pairs (tol 1e-8)")


def test_criterion_04_transport_matches_flow_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    n = 0
    for name in ("circles", "scaling"):
        sc = load_scene(name)
        for _ in range(5):
            p = random_leaf_path(rng, sc)
            sigma = random_section(rng, sc.chart.names)
            for k in (0, 1, 2):
                j = jet_of_section(sigma, _layout(sc, k), p.start)
                ode = transport(sc.connection, p, j, tol=1e-11)
                worst = max(worst, ode.distance(fd_oracle(sc.connection, p, sigma, k)))
            n += 1
    verdict(4, "transport ODE vs flow-composition oracle", worst <= 1e-4,
            f"max componentwise gap {worst:.2e} over {n} fixtures, k = 0..2 (tol 1e-4)")


def test_criterion_05_concentric_circles(verdict):
    sc = load_scene("circles")
    c = sc.connection
    dims = [(invariant_fibre(c, (1.0, 0.0), k).dimension, invariant_fibre(c, (1.0, 0.0), k).jet_dim) for k in (1, 2)]
    lay = _layout(sc, 1)
    q = sc.path("quarter")
    gap = 0.0
    for cval, s in [(1.0, 0.5), (-0.3, 2.0), (0.0, -1.0), (2.5, 0.0)]:
        out = transport(c, q, JetPoint.from_mapping(lay, (1.0, 0.0), {"f": cval, "f_x": s}), tol=1e-11)
        gap = max(gap, float(np.max(np.abs(np.array(out.jets) - (cval, 0.0, s)))))
    loops = hierarchy_check(c, sc.path("loop"), sc.path("const"), 2).verdicts
    ok = dims == [(2, 3), (3, 6)] and gap <= 1e-6 and loops == [EQUIVALENT] * 3
    verdict(5, "concentric circles", ok,
            f"dims {dims[0][0]}/{dims[0][1]}, {dims[1][0]}/{dims[1][1]}; quarter rotation gap {gap:.1e}; "
            f"loop vs const {loops}")


def test_criterion_06_germ_foliation(verdict):
    sc = load_scene("germfol")
    c = sc.connection
    left = [invariance_constraints(c, (-0.5,), k).nonzero_rows() for k in range(4)]
    full = all(invariant_fibre(c, (-0.5,), k).dimension == invariant_fibre(c, (-0.5,), k).jet_dim for k in range(4))
    right = [invariant_fibre(c, (0.5,), k).dimension for k in range(4)]
    rng = np.random.default_rng(6)
    paths = [sc.path("left"), sc.path("left2")]
    for _ in range(4):
        x0 = float(rng.uniform(-1.8, -0.2))
        paths.append(make_path(c, (x0,), float(rng.uniform(0.5, 2)), coeffs={"X": f"{rng.uniform(-3, 3):.4f}*(1 + x^2)*cos(t)"}))
    gap = 0.0
    for p in paths:
        lay = _layout(sc, 3)
        J = np.hstack([np.tile(p.start, (6, 1)), rng.uniform(-2, 2, (6, lay.jet_dim))])
        gap = max(gap, float(np.max(np.abs(transport_many(c, p, J, 3, 1e-11) - J))))
    ok = all(r == [] for r in left) and full and right == [1] * 4 and gap <= 1e-9
    verdict(6, "germ foliation", ok,
            f"x=-0.5 constraints {[len(r) for r in left]}; x=+0.5 dims {right}; "
            f"identity gap {gap:.1e} over {len(paths)} paths in x<0")


def _fixture_pairs():
    out = []
    for name in ("circles", "twisted", "germfol", "scaling", "regular"):
        sc = load_scene(name)
        paths = {n: sc.path(n) for n in sc.paths}
        for a, b in itertools.combinations(sorted(paths), 2):
            if np.max(np.abs(np.subtract(paths[a].start, paths[b].start))) <= 1e-9:
                out.append((f"{name}:{a},{b}", sc.connection, paths[a], paths[b]))
    return out


def _random_pairs(n: int):
    rng = np.random.default_rng(7)
    names = ("twisted", "circles", "scaling", "regular")
    scenes = {s: load_scene(s) for s in names}
    out = []
    for i in range(n):
        which = names[i % len(names)]
        sc = scenes[which]
        c = sc.connection
        g = sc.foliation.names[0]
        if which in ("twisted", "circles"):
            # rotations: equal end points whenever the angles differ by a multiple of 2 pi
            r = rng.uniform(0.5, 1.5)
            th = rng.uniform(0, 2 * math.pi)
            start = (r * math.cos(th), r * math.sin(th))
            base = rng.uniform(-2, 2)
            extra = 2 * math.pi * rng.integers(-1, 2) if rng.random() < 0.7 else rng.uniform(-1, 1)
            e1, e2 = base, base + extra
        else:
            start = (1.0,) if sc.chart.n_base == 1 else (float(rng.uniform(-1, 0)), float(rng.uniform(-1, 1)))
            e1 = rng.uniform(-0.6, 0.6)
            e2 = e1 if rng.random() < 0.6 else e1 + rng.uniform(-0.3, 0.3)
        d1, d2 = rng.uniform(0.8, 1.5), rng.uniform(0.8, 1.5)
        w = rng.uniform(1, 3)
        p1 = make_path(c, start, d1, coeffs={g: f"{e1 / (d1 - 0.15 * d1):.15g}"})
        shape = f"(1 + 0.5*sin({w:.4f}*t))"
        norm = _exposure_weight(shape, d2)
        p2 = make_path(c, start, d2, coeffs={g: f"{e2 / norm:.15g}*{shape}"})
        out.append((f"random{i}:{which}", c, p1, p2))
    return out


def _exposure_weight(shape: str, d: float) -> float:
    from scipy.integrate import quad

    from holojet.flow import window
    from holojet.symexpr import evaluate, parse_expr

    w, s = window(d, d / 10), parse_expr(shape)
    eps = d / 10
    val, _ = quad(lambda t: evaluate(w, {"t": t}) * evaluate(s, {"t": t}), 0, d,
                  points=[eps / 2, eps, d - eps, d - eps / 2], epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def test_criterion_07_hierarchy_monotonicity(verdict):
    pairs = _fixture_pairs() + _random_pairs(20)
    bad = []
    counts = {"equivalent": 0, "distinct": 0, "inconclusive": 0}
    for name, c, p1, p2 in pairs:
        vs = hierarchy_check(c, p1, p2, 2).verdicts
        for v in vs:
            counts[v] += 1
        if monotonicity_violations(vs):
            bad.append((name, vs))
    verdict(7, "hierarchy monotonicity", not bad,
            f"{len(pairs)} path pairs, verdict counts {counts}, violations {bad}")


def test_criterion_08_groupoid_laws(verdict):
    worst = 0.0
    n = 0
    failed = []
    for name in ("circles", "twisted", "scaling", "regular", "germfol"):
        sc = load_scene(name)
        names = sorted(sc.paths)
        rep = groupoid_laws_check(sc.connection, [sc.path(n) for n in names], 2, tol=1e-5, names=names)
        worst = max(worst, rep.max_discrepancy)
        n += len(rep.checks)
        failed += [(name, ch.law, ch.paths) for ch in rep.checks if not ch.passed]
    verdict(8, "groupoid laws", not failed and n > 0,
            f"{n} unit/inverse/composition checks, worst discrepancy {worst:.1e} (tol 1e-5), failures {failed}")


def test_criterion_09_connection_validators(verdict):
    good = {}
    for name in ("circles", "scaling", "germfol", "regular"):
        c = load_scene(name, validate=False).connection
        good[name] = max(validate_right_inverse(c).max_residual, validate_bracket_preserving(c).max_residual)
    nb = validate_bracket_preserving(load_scene("nonbracket", validate=False).connection).max_residual
    ys = load_scene("ysquared", validate=False).connection
    guard = flow_domain_guard(ys, ys.lifts[0], (0.0, 1.0), 2.0)
    ok = max(good.values()) <= 1e-8 and nb >= 0.1 and guard.blowup and guard.t_reached < 1.1
    verdict(9, "connection axiom validators", ok,
            f"valid residual max {max(good.values()):.1e}; non-bracket residual {nb:.3g}; "
            f"y^2 lift blowup={guard.blowup} at t={guard.t_reached:.6f}")


DETERMINISM_RUNS = [
    ["validate", "twisted"],
    ["invariants", "circles", "--order", "2", "--grid", "3"],
    ["transport", "twisted", "--path", "loop", "--jet", "r2", "--order", "2"],
    ["hierarchy", "twisted", "--paths", "loop,const", "--max-order", "2", "--seed", "5"],
]


def test_criterion_10_deterministic_reports(tmp_path, verdict):
    differ = []
    for i, argv in enumerate(DETERMINISM_RUNS):
        blobs = []
        for r in range(2):
            out = tmp_path / f"{i}_{r}.json"
            subprocess.run([sys.executable, "-m", "holojet.cli", *argv, "--out", str(out)],
                           check=True, capture_output=True)
            blobs.append(out.read_bytes())
        if blobs[0] != blobs[1]:
            differ.append(argv[0])
    verdict(10, "deterministic JSON", not differ,
            f"{len(DETERMINISM_RUNS)} commands run twice in fresh processes, differing: {differ}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
