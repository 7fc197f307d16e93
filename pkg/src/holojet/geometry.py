"""Charts, trivial bundles, vector fields and pointwise foliation checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compile import Program
from .symexpr import RESERVED, ZERO, Expr, diff, mul, add, sub, simplify

__all__ = [
    "TIME",
    "Chart",
    "Bundle",
    "BaseField",
    "ProjField",
    "Foliation",
    "NotProjectableError",
    "bracket",
    "lie_bracket",
    "proj_bracket",
    "pushforward",
    "sample_points",
    "membership_test",
    "involutivity_check",
    "MembershipReport",
    "InvolutivityReport",
]

TIME = "t"

INVOLUTIVITY_CAVEAT = (
    "pointwise check: bracket values lie in the span of generator values at the "
    "sampled points; necessary for closure under brackets, not sufficient"
)


class NotProjectableError(ValueError):
    pass


def _check_names(names: Sequence[str], what: str) -> None:
    for n in names:
        if not n.isidentifier() or n in RESERVED or n == TIME:
            raise ValueError(f"invalid {what} coordinate name {n!r}")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate {what} coordinate names")


@dataclass(frozen=True)
class Chart:
    names: tuple[str, ...]
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        _check_names(self.names, "base")
        if len(self.box) != len(self.names):
            raise ValueError("chart box needs one interval per coordinate")
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError(f"chart interval [{lo}, {hi}] has empty interior")

    @classmethod
    def default(cls, n: int, half_width: float = 2.0) -> "Chart":
        return cls(tuple(f"x{i + 1}" for i in range(n)), tuple((-half_width, half_width) for _ in range(n)))

    @property
    def n_base(self) -> int:
        return len(self.names)

    def contains(self, p, slack: float = 0.0) -> bool:
        return all(lo - slack <= v <= hi + slack for v, (lo, hi) in zip(p, self.box))


@dataclass(frozen=True)
class Bundle:
    base: Chart
    fibre_names: tuple[str, ...]
    fibre_box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "fibre_names", tuple(self.fibre_names))
        object.__setattr__(self, "fibre_box", tuple((float(a), float(b)) for a, b in self.fibre_box))
        _check_names(self.fibre_names, "fibre")
        if set(self.fibre_names) & set(self.base.names):
            raise ValueError("fibre and base coordinate names must be disjoint")
        if len(self.fibre_box) != len(self.fibre_names):
            raise ValueError("fibre box needs one interval per fibre coordinate")
        for lo, hi in self.fibre_box:
            if not lo < hi:
                raise ValueError(f"fibre interval [{lo}, {hi}] has empty interior")

    @property
    def n_base(self) -> int:
        return self.base.n_base

    @property
    def n_fibre(self) -> int:
        return len(self.fibre_names)

    @property
    def names(self) -> tuple[str, ...]:
        return self.base.names + self.fibre_names

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        return self.base.box + self.fibre_box


@dataclass(frozen=True)
class BaseField:
    """Vector field ``a^i d/dx^i`` on a chart; components may mention ``t``."""

    coords: tuple[str, ...]
    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.coords) != len(self.components):
            raise ValueError("component count must equal the number of base coordinates")
        allowed = set(self.coords) | {TIME}
        for c in self.components:
            extra = c.free_vars - allowed
            if extra:
                raise ValueError(f"base field component {c} mentions {sorted(extra)}")

    @property
    def time_dependent(self) -> bool:
        return any(TIME in c.free_vars for c in self.components)

    def __str__(self) -> str:
        return _field_str(self.components, self.coords)


@dataclass(frozen=True)
class ProjField:
    """Projectable field ``a^i d/dx^i + b^a d/df^a`` on a trivial bundle.

    The ``a`` components may depend on base coordinates (and ``t``) only; that
    restriction is projectability in coordinates.
    """

    bundle: Bundle
    a: tuple[Expr, ...]
    b: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        B = self.bundle
        if len(self.a) != B.n_base or len(self.b) != B.n_fibre:
            raise ValueError("projectable field has the wrong number of components")
        fib = set(B.fibre_names)
        for c in self.a:
            if c.free_vars & fib:
                raise NotProjectableError(f"base component {c} depends on fibre coordinates")
        allowed = set(B.names) | {TIME}
        for c in self.a + self.b:
            extra = c.free_vars - allowed
            if extra:
                raise ValueError(f"component {c} mentions {sorted(extra)}")

    @property
    def components(self) -> tuple[Expr, ...]:
        return self.a + self.b

    def __str__(self) -> str:
        return _field_str(self.components, self.bundle.names)


@dataclass(frozen=True)
class Foliation:
    """A chart and a finite list of named generating vector fields."""

    chart: Chart
    generators: tuple[BaseField, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        names = tuple(self.names) or tuple(f"X{i + 1}" for i in range(len(gens)))
        object.__setattr__(self, "names", names)
        if not gens:
            raise ValueError("a foliation needs at least one generator")
        if len(names) != len(gens) or len(set(names)) != len(names):
            raise ValueError("generator names must be unique, one per generator")
        for g in gens:
            if g.coords != self.chart.names:
                raise ValueError("generator coordinates differ from the chart")
            if g.time_dependent:
                raise ValueError("foliation generators must be time-independent")

    def generator(self, name: str) -> BaseField:
        try:
            return self.generators[self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown generator {name!r}") from None


def _field_str(comps: Sequence[Expr], coords: Sequence[str]) -> str:
    terms = [f"({c})*d/d{n}" for c, n in zip(comps, coords) if not c.is_zero()]
    return " + ".join(terms) if terms else "0"


# --------------------------------------------------------------------------
# brackets


def bracket(u: Sequence[Expr], v: Sequence[Expr], coords: Sequence[str]) -> tuple[Expr, ...]:
    """Components of ``[U, V] = (U.d)V - (V.d)U`` in the given coordinates."""
    out = []
    for j in range(len(coords)):
        terms = []
        for i, xi in enumerate(coords):
            if not u[i].is_zero():
                d = diff(v[j], xi)
                if not d.is_zero():
                    terms.append(mul(u[i], d))
            if not v[i].is_zero():
                d = diff(u[j], xi)
                if not d.is_zero():
                    terms.append(mul(v[i], d).__neg__())
        out.append(simplify(add(*terms)))
    return tuple(out)


def lie_bracket(X: BaseField, Y: BaseField) -> BaseField:
    if X.coords != Y.coords:
        raise ValueError("fields live on different charts")
    return BaseField(X.coords, bracket(X.components, Y.components, X.coords))


def proj_bracket(X: ProjField, Y: ProjField) -> ProjField:
    """Bracket of projectable fields on the total space (again projectable)."""
    if X.bundle != Y.bundle:
        raise ValueError("fields live on different bundles")
    B = X.bundle
    comps = bracket(X.components, Y.components, B.names)
    return ProjField(B, comps[: B.n_base], comps[B.n_base :])


def pushforward(X: ProjField) -> BaseField:
    fib = set(X.bundle.fibre_names)
    for c in X.a:
        if c.free_vars & fib:
            raise NotProjectableError(f"base component {c} depends on fibre coordinates")
    return BaseField(X.bundle.base.names, X.a)


# --------------------------------------------------------------------------
# pointwise checks


def sample_points(box: Sequence[tuple[float, float]], lattice: int = 5, n_random: int = 32, seed: int = 0) -> np.ndarray:
    """``lattice**n`` grid over the box followed by ``n_random`` uniform points."""
    axes = [np.linspace(lo, hi, lattice) for lo, hi in box]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(box), -1).T
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rand = lo + (hi - lo) * rng.random((n_random, len(box)))
    return np.vstack([grid, rand])


def _field_values(comps: Sequence[Expr], coords: Sequence[str], pts: np.ndarray) -> np.ndarray:
    return Program(comps, coords).batch(pts)


@dataclass
class MembershipReport:
    points: np.ndarray
    in_span: list[bool]
    residuals: list[float]
    coefficients: list[np.ndarray]

    @property
    def all_in_span(self) -> bool:
        return all(self.in_span)

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


def _span_residual(G: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    lam, *_ = np.linalg.lstsq(G, y, rcond=None)
    return float(np.linalg.norm(G @ lam - y)), lam


def membership_test(Y: BaseField, F: Foliation, samples=None, tol: float = 1e-8) -> MembershipReport:
    """Least-squares test of ``Y(x)`` against ``span{X_i(x)}`` at each sample."""
    pts = sample_points(F.chart.box) if samples is None else np.atleast_2d(np.asarray(samples, float))
    coords = F.chart.names
    yv = _field_values(Y.components, coords, pts)
    gv = [_field_values(g.components, coords, pts) for g in F.generators]
    in_span, res, coeffs = [], [], []
    for p in range(len(pts)):
        G = np.column_stack([g[p] for g in gv])
        r, lam = _span_residual(G, yv[p])
        res.append(r)
        coeffs.append(lam)
        in_span.append(r <= tol * (1.0 + float(np.linalg.norm(yv[p]))))
    return MembershipReport(pts, in_span, res, coeffs)


@dataclass
class InvolutivityReport:
    passed: bool
    worst_residual: float
    failures: list[tuple[str, str, tuple[float, ...], float]]
    n_points: int
    caveat: str = INVOLUTIVITY_CAVEAT

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_residual": self.worst_residual,
            "n_points": self.n_points,
            "failures": [
                {"pair": [a, b], "point": list(p), "residual": r} for a, b, p, r in self.failures
            ],
            "caveat": self.caveat,
        }


def involutivity_check(F: Foliation, samples=None, tol: float = 1e-8) -> InvolutivityReport:
    """Run :func:`membership_test` on every pairwise bracket of generators."""
    pts = sample_points(F.chart.box) if samples is None else np.atleast_2d(np.asarray(samples, float))
    worst = 0.0
    failures = []
    gens = F.generators
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            br = lie_bracket(gens[i], gens[j])
            rep = membership_test(br, F, pts, tol)
            worst = max(worst, rep.max_residual)
            for p, ok, r in zip(rep.points, rep.in_span, rep.residuals):
                if not ok:
                    failures.append((F.names[i], F.names[j], tuple(map(float, p)), r))
    return InvolutivityReport(not failures, worst, failures, len(pts))


def zero_field(coords: Sequence[str]) -> BaseField:
    return BaseField(tuple(coords), tuple(ZERO for _ in coords))


def scale_field(c: Expr, X: BaseField) -> BaseField:
    return BaseField(X.coords, tuple(simplify(mul(c, a)) for a in X.components))


def field_difference(X: BaseField, Y: BaseField) -> BaseField:
    return BaseField(X.coords, tuple(simplify(sub(a, b)) for a, b in zip(X.components, Y.components)))
