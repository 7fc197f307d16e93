"""Transport of jets along leafwise paths.

Production transport integrates the prolongation of the lifted path field on
jet coordinates.  :func:`fd_oracle` is an independent reference: it builds
the transported section by composing the backward base flow, the section and
the forward lifted flow, then differentiates it on a finite-difference
stencil.
"""
from __future__ import annotations

import csv
import io
from collections.abc import Mapping
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .compile import Program
from .connection import Connection, lift_combination
from .flow import LeafwisePath, Segment, integrate, segment_field
from .geometry import TIME, ProjField
from .multiindex import JetLayout, MultiIndex
from .prolong import JetField, prolong
from .symexpr import Expr, diff, evaluate, mul, parse_expr, simplify

__all__ = [
    "JetPoint",
    "JetPath",
    "jet_of_section",
    "transport_ode",
    "transport",
    "transport_many",
    "fd_oracle",
    "segment_lift",
    "segment_prolongation",
]

# allowed distance between a jet's base point and the path start; covers the
# integration error of the stored path trajectory
BASE_GAP_TOL = 1e-6


@dataclass(frozen=True)
class JetPoint:
    """A point of the k-jet bundle: base coordinates and jet coordinates."""

    layout: JetLayout
    x: tuple[float, ...]
    jets: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "jets", tuple(float(v) for v in self.jets))
        if len(self.x) != self.layout.n_base or len(self.jets) != self.layout.jet_dim:
            raise ValueError(
                f"jet point needs {self.layout.n_base} base and {self.layout.jet_dim} jet coordinates"
            )

    @classmethod
    def from_array(cls, layout: JetLayout, arr) -> "JetPoint":
        arr = np.asarray(arr, dtype=float)
        return cls(layout, tuple(arr[: layout.n_base]), tuple(arr[layout.n_base :]))

    @classmethod
    def from_mapping(cls, layout: JetLayout, x, values: Mapping[str, float]) -> "JetPoint":
        """Jet coordinates by name; unnamed ones are zero."""
        names = layout.jet_names
        unknown = set(values) - set(names)
        if unknown:
            raise KeyError(f"unknown jet coordinate {sorted(unknown)[0]!r}")
        return cls(layout, tuple(x), tuple(float(values.get(n, 0.0)) for n in names))

    @property
    def order(self) -> int:
        return self.layout.order

    @property
    def array(self) -> np.ndarray:
        return np.array(self.x + self.jets)

    def value(self, name: str) -> float:
        return self.jets[self.layout.jet_names.index(name)]

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.layout.coord_names, self.x + self.jets))

    def truncate(self, order: int) -> "JetPoint":
        lay = self.layout.truncate(order)
        return JetPoint(lay, self.x, self.jets[: lay.jet_dim])

    def distance(self, other: "JetPoint") -> float:
        if self.layout != other.layout:
            raise ValueError("jet points live on different layouts")
        return float(np.max(np.abs(self.array - other.array)))


@dataclass
class JetPath:
    """Time-stamped jet points along a path."""

    layout: JetLayout
    t: np.ndarray
    points: np.ndarray
    n_steps: int = 0
    max_error: float = 0.0

    @property
    def endpoint(self) -> JetPoint:
        return JetPoint.from_array(self.layout, self.points[-1])

    def base_trajectory(self) -> np.ndarray:
        return self.points[:, : self.layout.n_base]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([TIME] + self.layout.coord_names)
        for s, row in zip(self.t, self.points):
            w.writerow([repr(float(s))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _section_exprs(sigma, layout: JetLayout) -> tuple[Expr, ...]:
    if isinstance(sigma, Expr) or isinstance(sigma, str):
        sigma = (sigma,)
    if isinstance(sigma, Mapping):
        sigma = tuple(sigma[n] for n in layout.fibre_names)
    out = []
    for s in sigma:
        out.append(parse_expr(s, layout.base_names) if isinstance(s, str) else s)
    if len(out) != layout.n_fibre:
        raise ValueError("a section needs one expression per fibre coordinate")
    for e in out:
        extra = e.free_vars - set(layout.base_names)
        if extra:
            raise ValueError(f"section component {e} mentions {sorted(extra)}")
    return tuple(out)


def jet_of_section(sigma, layout: JetLayout, x) -> JetPoint:
    """k-jet of a symbolic section at ``x`` by repeated differentiation."""
    comps = _section_exprs(sigma, layout)
    env = dict(zip(layout.base_names, map(float, x)))
    cache: dict[tuple[int, MultiIndex], Expr] = {}
    vals = []
    for a, I in layout.jet_coords:
        if not I:
            e = comps[a]
        else:
            e = simplify(diff(cache[(a, I[:-1])], layout.base_names[I[-1]]))
        cache[(a, I)] = e
        vals.append(evaluate(e, env))
    return JetPoint(layout, tuple(x), tuple(vals))


# --------------------------------------------------------------------------
# jet ODE


@lru_cache(maxsize=256)
def segment_lift(c: Connection, seg: Segment) -> ProjField:
    """``l(w(t) sum_i c_i X_i)`` for one segment, in local time."""
    w = seg.local_window()
    coeffs = [simplify(mul(w, ci)) for ci in seg.local_coeffs()]
    L = lift_combination(c, coeffs)
    return ProjField(L.bundle, tuple(map(simplify, L.a)), tuple(map(simplify, L.b)))


@lru_cache(maxsize=256)
def segment_prolongation(c: Connection, seg: Segment, k: int) -> tuple[JetField, Program]:
    """Prolonged lifted field of a segment and its compiled right-hand side."""
    V = prolong(segment_lift(c, seg), k)
    prog = Program(V.full_components(), (TIME,) + tuple(V.layout.coord_names))
    return V, prog


def _check_path(c: Connection, p: LeafwisePath) -> None:
    if p.foliation != c.foliation:
        raise ValueError("path and connection belong to different foliations")


def _jet_box(c: Connection, layout: JetLayout) -> list[tuple[float, float]]:
    B = c.bundle
    box = list(B.base.box) + [(-np.inf, np.inf)] * layout.jet_dim
    for a in range(layout.n_fibre):
        box[layout.n_base + layout.index(a, ())] = B.fibre_box[a]
    return box


def _rhs(prog: Program, dim: int):
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        pts = y.reshape(-1, dim)
        X = np.empty((pts.shape[0], dim + 1))
        X[:, 0] = t
        X[:, 1:] = pts
        return prog.batch(X).ravel()

    return rhs


def transport_many(
    c: Connection, p: LeafwisePath, starts: np.ndarray, k: int, tol: float = 1e-9, keep: bool = False
):
    """Transport a batch of jet points (rows of ``starts``) along ``p``.

    All rows share one adaptive step sequence.  Returns the end states and,
    with ``keep=True``, the concatenated ``(t, states)`` history.
    """
    _check_path(c, p)
    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    Y = np.atleast_2d(np.asarray(starts, dtype=float))
    if Y.shape[1] != layout.dim:
        raise ValueError(f"expected jet states of length {layout.dim}")
    box = _jet_box(c, layout)
    ts, hist = [np.array([0.0])], [Y[None].copy()]
    offset = 0.0
    n_steps = 0
    max_err = 0.0
    y = Y.ravel()
    for seg in p.segments:
        if seg.is_zero():
            if keep:
                ts.append(np.array([offset + seg.duration]))
                hist.append(y.reshape(1, *Y.shape).copy())
        else:
            _, prog = segment_prolongation(c, seg, k)
            res = integrate(_rhs(prog, layout.dim), y, 0.0, seg.duration, tol=tol, box=box, h_max=seg.duration / 8)
            n_steps += res.n_steps
            max_err = max(max_err, res.max_error)
            y = res.endpoint
            if keep:
                ts.append(res.t[1:] + offset)
                hist.append(res.y[1:].reshape(-1, *Y.shape))
        offset += seg.duration
    end = y.reshape(Y.shape)
    if keep:
        return end, np.concatenate(ts), np.concatenate(hist), n_steps, max_err
    return end


def transport_ode(c: Connection, p: LeafwisePath, j0: JetPoint, k: int | None = None, tol: float = 1e-9) -> JetPath:
    """Integrate the prolonged lifted path field from ``j0`` over ``[0, d]``."""
    k = j0.order if k is None else k
    if k != j0.order:
        j0 = j0.truncate(k) if k < j0.order else _pad(j0, k)
    gap = float(np.max(np.abs(np.subtract(j0.x, p.start))))
    if gap > BASE_GAP_TOL:
        raise ValueError(f"jet base point is {gap:.3g} away from the start of the path")
    _, t, hist, n_steps, max_err = transport_many(c, p, j0.array[None], k, tol, keep=True)
    return JetPath(j0.layout, t, hist[:, 0, :], n_steps, max_err)


def _pad(j: JetPoint, k: int) -> JetPoint:
    lay = JetLayout(j.layout.base_names, j.layout.fibre_names, k)
    return JetPoint(lay, j.x, j.jets + (0.0,) * (lay.jet_dim - len(j.jets)))


def transport(c: Connection, p: LeafwisePath, j0: JetPoint, k: int | None = None, tol: float = 1e-9) -> JetPoint:
    """Endpoint of :func:`transport_ode`: the image of ``j0`` under ``T(p)``."""
    k = j0.order if k is None else k
    if k != j0.order:
        j0 = j0.truncate(k) if k < j0.order else _pad(j0, k)
    gap = float(np.max(np.abs(np.subtract(j0.x, p.start))))
    if gap > BASE_GAP_TOL:
        raise ValueError(f"jet base point is {gap:.3g} away from the start of the path")
    end = transport_many(c, p, j0.array[None], k, tol)[0]
    return JetPoint.from_array(j0.layout, end)


# --------------------------------------------------------------------------
# flow-composition oracle

_D1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
_D2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}


def _stencil(n: int, k: int) -> tuple[list[tuple[int, ...]], dict[MultiIndex, dict[tuple[int, ...], float]]]:
    """Offsets (in units of h) and the weights of every derivative up to order k."""
    zero = (0,) * n
    weights: dict[MultiIndex, dict[tuple[int, ...], float]] = {(): {zero: 1.0}}
    if k >= 1:
        for i in range(n):
            weights[(i,)] = {tuple(s if m == i else 0 for m in range(n)): w for s, w in _D1.items()}
    if k >= 2:
        for i in range(n):
            weights[(i, i)] = {tuple(s if m == i else 0 for m in range(n)): w for s, w in _D2.items()}
            for j in range(i + 1, n):
                ww = {}
                for (si, wi), (sj, wj) in product(_D1.items(), _D1.items()):
                    off = tuple(si if m == i else sj if m == j else 0 for m in range(n))
                    ww[off] = wi * wj
                weights[(i, j)] = ww
    offsets = sorted({o for w in weights.values() for o in w})
    return offsets, weights


def _flow_segments(fields, segments, Y, names, box, tol, backward):
    y = Y.ravel()
    order = reversed(segments) if backward else segments
    for seg in order:
        if seg.is_zero():
            continue
        comps = fields(seg)
        t0, t1 = (seg.duration, 0.0) if backward else (0.0, seg.duration)
        y = integrate(comps, y, t0, t1, tol=tol, box=box, h_max=seg.duration / 8, coords=names).endpoint
    return y.reshape(Y.shape)


def fd_oracle(
    c: Connection, p: LeafwisePath, sigma, k: int, h: float = 1e-3, tol: float = 1e-11
) -> JetPoint:
    """k-jet at the end of ``p`` of ``y -> Fl^{lX}_{d,0}(sigma(Fl^X_{0,d}(y)))``.

    Derivatives come from fourth-order central differences with step ``h``
    (tensor-product stencils for mixed partials).  Every stencil point is
    integrated as part of one batched system so all points share the same
    step sequence, which keeps the differenced integration error smooth.
    """
    if k > 2:
        raise ValueError("the finite-difference oracle supports k <= 2")
    _check_path(c, p)
    B = c.bundle
    layout = JetLayout(B.base.names, B.fibre_names, k)
    sig = _section_exprs(sigma, layout)
    n = B.n_base
    offsets, weights = _stencil(n, k)
    y_end = np.asarray(p.end)
    P = y_end + h * np.array(offsets, dtype=float)
    base_names = B.base.names
    X0 = _flow_segments(
        lambda s: segment_field(s, p.foliation), p.segments, P, base_names, B.base.box, tol, backward=True
    )
    S = Program(sig, base_names).batch(X0)
    Z0 = np.hstack([X0, S])
    run_box = list(B.base.box) + [(-np.inf, np.inf)] * B.n_fibre
    Z1 = _flow_segments(
        lambda s: segment_lift(c, s).components, p.segments, Z0, B.names, run_box, tol, backward=False
    )
    tau = Z1[:, n:]
    row = {o: r for r, o in enumerate(offsets)}
    jets = []
    for a, I in layout.jet_coords:
        scale = h ** len(I)
        jets.append(sum(w * tau[row[o], a] for o, w in weights[I].items()) / scale)
    return JetPoint(layout, tuple(y_end), tuple(jets))
