"""Singular partial connections given as lifts of foliation generators.

A :class:`Connection` stores one projectable field per generator and extends
linearly over functions of ``(t, x)``.  The axioms are checked pointwise:
right-inverse to the pushforward, bracket preservation, and a numerical
completeness probe that integrates the lifted flow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .compile import Program
from .flow import BlowupError, DomainExitError, FlowResult, integrate
from .geometry import (
    TIME,
    Bundle,
    Foliation,
    ProjField,
    bracket,
    sample_points,
)
from .symexpr import ZERO, Expr, add, diff, mul, simplify, sub

__all__ = [
    "Connection",
    "lift_combination",
    "validate_right_inverse",
    "validate_bracket_preserving",
    "flow_domain_guard",
    "RightInverseReport",
    "BracketReport",
    "GuardReport",
]


def _vanishes(e: Expr, names: Sequence[str], box, seed: int = 0) -> bool:
    e = simplify(e)
    if e.is_zero():
        return True
    if e.op == "const":
        return False
    pts = sample_points(box, lattice=2, n_random=8, seed=seed)
    vals = Program([e], names).batch(pts)[:, 0]
    return bool(np.all(np.abs(vals) <= 1e-12))


@dataclass(frozen=True, eq=False)
class Connection:
    """Lifts ``l(X_i)`` of the generators of ``foliation`` to ``bundle``."""

    bundle: Bundle
    foliation: Foliation
    lifts: tuple[ProjField, ...]

    def __post_init__(self):
        object.__setattr__(self, "lifts", tuple(self.lifts))
        if self.bundle.base != self.foliation.chart:
            raise ValueError("bundle base and foliation chart differ")
        if len(self.lifts) != len(self.foliation.generators):
            raise ValueError(
                f"need one lift per generator: {len(self.foliation.generators)} generators, {len(self.lifts)} lifts"
            )
        for L in self.lifts:
            if L.bundle != self.bundle:
                raise ValueError("lift lives on a different bundle")
            for c in L.components:
                if TIME in c.free_vars:
                    raise ValueError("lifts of generators must be time-independent")

    @classmethod
    def trivial(cls, bundle: Bundle, foliation: Foliation) -> "Connection":
        """The lift with zero fibre components."""
        lifts = tuple(
            ProjField(bundle, g.components, tuple(ZERO for _ in bundle.fibre_names)) for g in foliation.generators
        )
        return cls(bundle, foliation, lifts)

    @property
    def names(self) -> tuple[str, ...]:
        return self.foliation.names

    def lift(self, name: str) -> ProjField:
        return self.lifts[self.foliation.names.index(name)]

    @cached_property
    def affine_fibre(self) -> bool:
        """Whether every fibre component is affine in the fibre coordinates."""
        B = self.bundle
        for L in self.lifts:
            for b in L.b:
                for p in B.fibre_names:
                    dp = diff(b, p)
                    for q in B.fibre_names:
                        if not _vanishes(diff(dp, q), B.names, B.box):
                            return False
        return True

    @property
    def is_trivial(self) -> bool:
        return all(simplify(b).is_zero() for L in self.lifts for b in L.b)

    def __eq__(self, other):
        if not isinstance(other, Connection):
            return NotImplemented
        return (self.bundle, self.foliation, self.lifts) == (other.bundle, other.foliation, other.lifts)

    def __hash__(self):
        return hash((self.bundle, self.foliation, self.lifts))


def _coeff_list(c: Connection, coeffs) -> list[Expr]:
    from collections.abc import Mapping

    from .symexpr import const

    if isinstance(coeffs, Mapping):
        cs = [coeffs.get(n, ZERO) for n in c.names]
    else:
        cs = list(coeffs)
    if len(cs) != len(c.lifts):
        raise ValueError("need one coefficient per generator")
    out = []
    fib = set(c.bundle.fibre_names)
    for e in cs:
        e = e if isinstance(e, Expr) else const(float(e))
        if e.free_vars & fib:
            raise ValueError(f"coefficient {e} depends on fibre coordinates")
        out.append(e)
    return out


def lift_combination(c: Connection, coeffs) -> ProjField:
    """``l(sum_i c_i X_i) = sum_i (c_i o pi) l(X_i)``."""
    cs = _coeff_list(c, coeffs)
    B = c.bundle
    a = tuple(add(*(mul(ci, L.a[j]) for ci, L in zip(cs, c.lifts))) for j in range(B.n_base))
    b = tuple(add(*(mul(ci, L.b[j]) for ci, L in zip(cs, c.lifts))) for j in range(B.n_fibre))
    return ProjField(B, a, b)


# --------------------------------------------------------------------------
# axiom checks


@dataclass
class RightInverseReport:
    passed: bool
    max_residual: float
    per_generator: dict[str, float]
    n_samples: int
    tol: float

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "per_generator": dict(self.per_generator),
            "n_samples": self.n_samples,
            "tol": self.tol,
        }


def _base_samples(c: Connection, samples) -> np.ndarray:
    if samples is None:
        return sample_points(c.foliation.chart.box, lattice=5, n_random=16, seed=0)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def validate_right_inverse(c: Connection, samples=None, tol: float = 1e-8) -> RightInverseReport:
    """Max over samples of ``|a(l(X_i)) - X_i|`` for each generator."""
    pts = _base_samples(c, samples)
    names = c.foliation.chart.names
    per = {}
    for n, g, L in zip(c.names, c.foliation.generators, c.lifts):
        diffs = [simplify(sub(a, x)) for a, x in zip(L.a, g.components)]
        vals = Program(diffs, names).batch(pts)
        per[n] = float(np.max(np.abs(vals))) if vals.size else 0.0
    worst = max(per.values(), default=0.0)
    return RightInverseReport(worst <= tol, worst, per, len(pts), tol)


@dataclass
class BracketReport:
    passed: bool
    max_residual: float
    per_pair: dict[str, float]
    n_samples: int
    n_nonunique: int
    base_failures: int
    tol: float
    note: str = (
        "pointwise evidence only; at samples where the generator values are "
        "linearly dependent the residual is minimised over all admissible coefficients"
    )

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "per_pair": dict(self.per_pair),
            "n_samples": self.n_samples,
            "n_nonunique": self.n_nonunique,
            "base_failures": self.base_failures,
            "tol": self.tol,
            "note": self.note,
        }


def _fibre_samples(B: Bundle, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in B.fibre_box])
    hi = np.array([b[1] for b in B.fibre_box])
    mid = 0.5 * (lo + hi)
    pts = [mid, lo + 0.9 * (hi - lo), lo + 0.1 * (hi - lo)]
    pts += list(lo + (hi - lo) * rng.random((max(0, n - 3), len(lo))))
    return np.array(pts[:n])


def validate_bracket_preserving(
    c: Connection, samples=None, tol: float = 1e-8, n_fibre: int = 4, seed: int = 0
) -> BracketReport:
    """Compare ``[l X_i, l X_j]`` with ``sum_k lambda_k l(X_k)`` pointwise.

    At each base sample ``x`` the coefficients ``lambda`` range over the
    affine set solving ``sum_k lambda_k X_k(x) = [X_i, X_j](x)``; the residual
    is the smallest achievable misfit over a few fibre points above ``x``,
    with ``lambda`` shared between them.  When the generator values are
    independent the set is a single point and this is the plain comparison.
    """
    pts = _base_samples(c, samples)
    fib = _fibre_samples(c.bundle, n_fibre, seed)
    B = c.bundle
    n, r, m = B.n_base, B.n_fibre, len(c.lifts)
    gens = c.foliation.generators
    gprog = Program([e for g in gens for e in g.components], B.base.names)
    lprog = Program([e for L in c.lifts for e in L.components], B.names)
    per: dict[str, float] = {}
    nonunique: set[int] = set()
    base_fail = 0
    worst = 0.0
    Gall = gprog.batch(pts).reshape(len(pts), m, n)
    tot = np.array([np.concatenate([x, f]) for x in pts for f in fib])
    Lall = lprog.batch(tot).reshape(len(pts), len(fib), m, n + r)
    for i in range(m):
        for j in range(i + 1, m):
            base_br = bracket(gens[i].components, gens[j].components, B.base.names)
            lift_br = bracket(c.lifts[i].components, c.lifts[j].components, B.names)
            yb = Program(base_br, B.base.names).batch(pts)
            zb = Program(lift_br, B.names).batch(tot).reshape(len(pts), len(fib), n + r)
            pair = 0.0
            for p in range(len(pts)):
                G = Gall[p].T
                lam0, *_ = np.linalg.lstsq(G, yb[p], rcond=None)
                if np.linalg.norm(G @ lam0 - yb[p]) > tol * (1 + np.linalg.norm(yb[p])):
                    base_fail += 1
                u, s, vt = np.linalg.svd(G)
                rank = int(np.sum(s > 1e-10 * max(s[0] if s.size else 0.0, 1e-300)))
                N = vt[rank:].T
                if N.shape[1]:
                    nonunique.add(p)
                A = np.vstack([Lall[p, q].T for q in range(len(fib))])
                Z = zb[p].ravel()
                if N.shape[1]:
                    mu, *_ = np.linalg.lstsq(A @ N, Z - A @ lam0, rcond=None)
                    lam = lam0 + N @ mu
                else:
                    lam = lam0
                res = float(np.max(np.abs(A @ lam - Z))) if Z.size else 0.0
                pair = max(pair, res)
            per[f"{c.names[i]},{c.names[j]}"] = pair
            worst = max(worst, pair)
    return BracketReport(
        worst <= tol and base_fail == 0, worst, per, len(pts), len(nonunique), base_fail, tol
    )


@dataclass
class GuardReport:
    """Outcome of a completeness probe along one lifted flow."""

    exited: bool
    exit_time: float | None
    blowup: bool
    base_exit: bool
    t_reached: float
    endpoint: tuple[float, ...]
    message: str
    trajectory: FlowResult | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "exited": self.exited,
            "exit_time": self.exit_time,
            "blowup": self.blowup,
            "base_exit": self.base_exit,
            "t_reached": self.t_reached,
            "endpoint": list(self.endpoint),
            "message": self.message,
        }


def flow_domain_guard(
    c: Connection,
    field: ProjField,
    start,
    t_max: float,
    box: Sequence[tuple[float, float]] | None = None,
    tol: float = 1e-9,
) -> GuardReport:
    """Integrate ``field`` from ``start`` and report when the fibre leaves ``box``.

    ``box`` bounds the fibre coordinates (default: the bundle's fibre box).
    The integration itself only stops at the base chart boundary or on
    blowup, so the report distinguishes leaving the fibre box from a
    genuine finite-time blowup.
    """
    B = c.bundle
    fbox = np.asarray(B.fibre_box if box is None else box, dtype=float).reshape(-1, 2)
    run_box = list(B.base.box) + [(-np.inf, np.inf)] * B.n_fibre
    start = np.asarray(start, dtype=float)
    blowup = base_exit = False
    msg = "no exit before t_max"
    try:
        res = integrate(field, start, 0.0, float(t_max), tol=tol, box=run_box)
    except BlowupError as e:
        res, blowup, msg = e.partial, True, str(e)
    except DomainExitError as e:
        res, base_exit, msg = e.partial, True, str(e)
    exit_time = _first_exit(res, B.n_base, fbox) if res is not None else None
    exited = exit_time is not None or blowup
    if exit_time is not None and not blowup:
        msg = f"fibre left the box at t={exit_time:.9g}"
    t_reached = res.t1 if res is not None else 0.0
    end = tuple(map(float, res.endpoint)) if res is not None else tuple(start)
    return GuardReport(exited, exit_time, blowup, base_exit, t_reached, end, msg, res)


def _first_exit(res: FlowResult, nb: int, fbox: np.ndarray) -> float | None:
    lo, hi = fbox[:, 0], fbox[:, 1]
    fib = res.y[:, nb:]
    out = np.any((fib < lo) | (fib > hi), axis=1)
    if not out.any():
        return None
    k = int(np.argmax(out))
    if k == 0:
        return float(res.t[0])
    a, b = float(res.t[k - 1]), float(res.t[k])
    for _ in range(60):
        m = 0.5 * (a + b)
        y = res(m)[nb:]
        if np.any((y < lo) | (y > hi)):
            b = m
        else:
            a = m
    return b
