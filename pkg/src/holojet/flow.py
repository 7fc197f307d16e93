"""Numerical flows and leafwise paths.

:func:`integrate` is an adaptive Dormand-Prince 5(4) integrator with cubic
Hermite dense output, box-exit detection and a blowup detector.  Leafwise
paths are stored as lists of segments, each carrying generator coefficients
and an exact cutoff window, so their trajectories can always be recomputed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .compile import Program
from .geometry import TIME, BaseField, Foliation, ProjField
from .symexpr import ONE, ZERO, DomainError, Expr, add, bump, const, evaluate, mul, neg, simplify, sub, subs, var

__all__ = [
    "FlowError",
    "DomainExitError",
    "BlowupError",
    "MaxStepsError",
    "FlowResult",
    "integrate",
    "Segment",
    "LeafwisePath",
    "make_path",
    "constant_path",
    "concatenate",
    "invert",
    "window",
    "exposure",
    "segment_field",
]

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

BLOWUP_THRESHOLD = 1e15


class FlowError(RuntimeError):
    def __init__(self, msg: str, t: float, partial: "FlowResult | None" = None):
        self.t = t
        self.partial = partial
        super().__init__(msg)


class DomainExitError(FlowError):
    pass


class BlowupError(FlowError):
    pass


class MaxStepsError(FlowError):
    pass


@dataclass
class FlowResult:
    """Accepted nodes of an integration with slopes for Hermite interpolation."""

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    max_error: float = 0.0
    exited: bool = False

    @property
    def endpoint(self) -> np.ndarray:
        return self.y[-1]

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    def __call__(self, s: float) -> np.ndarray:
        """Cubic Hermite interpolant at time ``s``."""
        t = self.t
        if len(t) == 1:
            return self.y[0].copy()
        forward = t[-1] >= t[0]
        ts = t if forward else -t
        ss = s if forward else -s
        if ss <= ts[0]:
            return self.y[0].copy()
        if ss >= ts[-1]:
            return self.y[-1].copy()
        i = int(np.searchsorted(ts, ss, side="right")) - 1
        return _hermite(t[i], t[i + 1], self.y[i], self.y[i + 1], self.dy[i], self.dy[i + 1], s)

    def sample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self(s) for s in times])


def _hermite(ta, tb, ya, yb, fa, fb, s):
    h = tb - ta
    th = (s - ta) / h
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th * th * (3 - 2 * th)
    h11 = th * th * (th - 1)
    return h00 * ya + h10 * h * fa + h01 * yb + h11 * h * fb


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def _initial_step(rhs, t0, y0, f0, direction, tol, span) -> float:
    sc = tol + tol * np.abs(y0)
    d0 = _rms(y0 / sc)
    d1 = _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(t0 + direction * h0, y1)
    d2 = _rms((f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _outside(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    return bool(np.any(y < lo) or np.any(y > hi))


def integrate(
    field,
    x0,
    t0: float,
    t1: float,
    tol: float = 1e-9,
    box: Sequence[tuple[float, float]] | None = None,
    max_steps: int = 100_000,
    h_max: float | None = None,
    coords: Sequence[str] | None = None,
) -> FlowResult:
    """Integrate ``dy/dt = field(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``field`` is a :class:`BaseField`, a :class:`ProjField`, a sequence of
    expressions over ``t`` and ``coords``, or a callable ``rhs(t, y)``.
    ``box`` is one interval per state component (tiled when the state is a
    batch of points).  Raises :class:`DomainExitError` when the solution
    leaves the box, :class:`BlowupError` on step-size underflow or runaway
    growth, and :class:`MaxStepsError` when the step budget runs out; each
    carries the partial result.
    """
    rhs = as_rhs(field, coords)
    y = np.array(x0, dtype=np.float64).ravel()
    t = float(t0)
    t_end = float(t1)
    span = abs(t_end - t)
    direction = 1.0 if t_end >= t else -1.0
    lo = hi = None
    if box is not None:
        b = np.asarray(box, dtype=np.float64).reshape(-1, 2)
        reps = y.size // len(b)
        lo = np.tile(b[:, 0], reps)
        hi = np.tile(b[:, 1], reps)
        if _outside(y, lo, hi):
            raise DomainExitError(f"initial point {y} lies outside the domain box", t)
    f = rhs(t, y)
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    res = FlowResult(np.array(ts), np.array(ys), np.array(fs))
    if span == 0.0:
        return res
    hmax = span if h_max is None else min(span, h_max)
    h = min(_initial_step(rhs, t, y, f, direction, tol, span), hmax)
    n_steps = n_rej = 0
    max_err = 0.0
    domain_err: DomainError | None = None
    while (t_end - t) * direction > 0:
        if n_steps >= max_steps:
            raise MaxStepsError(f"exceeded {max_steps} steps at t={t}", t, _pack(ts, ys, fs, n_steps, n_rej, max_err))
        if h < 1e-13 * max(1.0, abs(t)):
            if domain_err is not None and not _is_overflow(domain_err):
                raise domain_err
            raise BlowupError(
                f"step size underflow at t={t:.12g}: probable finite-time blowup "
                "(incomplete lift, cf. the y^2 d/dy counterexample)",
                t,
                _pack(ts, ys, fs, n_steps, n_rej, max_err),
            )
        last = (t_end - t) * direction <= h * (1 + 1e-12)
        hh = (t_end - t) * direction if last else h
        K = [f]
        try:
            for s in range(1, 7):
                ys_ = y + direction * hh * sum(a * k for a, k in zip(_A[s], K))
                K.append(rhs(t + direction * _C[s] * hh, ys_))
        except DomainError as exc:
            domain_err = exc
            h = hh * 0.25
            n_rej += 1
            continue
        y_new = y + direction * hh * sum(b * k for b, k in zip(_B, K) if b != 0.0)
        err_vec = direction * hh * sum(e * k for e, k in zip(_E, K) if e != 0.0)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(err_vec))):
            h = hh * 0.25
            n_rej += 1
            continue
        sc = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / sc)
        if err <= 1.0:
            t_new = t_end if last else t + direction * hh
            f_new = K[6]
            n_steps += 1
            max_err = max(max_err, err)
            if lo is not None and _outside(y_new, lo, hi):
                t_exit, y_exit = _locate_exit(t, t_new, y, y_new, f, f_new, lo, hi)
                ts.append(t_exit)
                ys.append(y_exit)
                fs.append(rhs(t_exit, y_exit))
                partial = _pack(ts, ys, fs, n_steps, n_rej, max_err)
                partial.exited = True
                raise DomainExitError(f"trajectory left the domain box at t={t_exit:.9g}", t_exit, partial)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            if np.max(np.abs(y)) > BLOWUP_THRESHOLD:
                raise BlowupError(
                    f"solution exceeded {BLOWUP_THRESHOLD:g} at t={t:.12g}: probable finite-time blowup "
                    "(incomplete lift, cf. the y^2 d/dy counterexample)",
                    t,
                    _pack(ts, ys, fs, n_steps, n_rej, max_err),
                )
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-0.2)))
            h = min(hmax, hh * fac) if not last else h
        else:
            n_rej += 1
            h = hh * max(0.2, 0.9 * err ** (-0.2))
    return _pack(ts, ys, fs, n_steps, n_rej, max_err)


def _is_overflow(exc: DomainError) -> bool:
    return str(exc).startswith(("overflow", "non-finite"))


def _pack(ts, ys, fs, n_steps, n_rej, max_err) -> FlowResult:
    return FlowResult(np.array(ts), np.array(ys), np.array(fs), n_steps, n_rej, max_err)


def _locate_exit(ta, tb, ya, yb, fa, fb, lo, hi, iters: int = 60):
    a, b = ta, tb
    for _ in range(iters):
        m = 0.5 * (a + b)
        if _outside(_hermite(ta, tb, ya, yb, fa, fb, m), lo, hi):
            b = m
        else:
            a = m
    return b, _hermite(ta, tb, ya, yb, fa, fb, b)


def as_rhs(field, coords: Sequence[str] | None = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """Turn a field description into ``rhs(t, y)``; batches of points are allowed."""
    if callable(field) and not isinstance(field, (BaseField, ProjField)):
        return field
    if isinstance(field, BaseField):
        comps, names = field.components, field.coords
    elif isinstance(field, ProjField):
        comps, names = field.components, field.bundle.names
    else:
        comps = tuple(field)
        if coords is None:
            raise ValueError("coordinate names are required for raw component lists")
        names = tuple(coords)
    return _program_rhs(_compiled(tuple(comps), tuple(names)))


@lru_cache(maxsize=512)
def _compiled(comps: tuple[Expr, ...], names: tuple[str, ...]) -> Program:
    return Program(comps, (TIME,) + names)


def _program_rhs(prog: Program):
    d = prog.n_out

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        pts = y.reshape(-1, d)
        X = np.empty((pts.shape[0], d + 1))
        X[:, 0] = t
        X[:, 1:] = pts
        return prog.batch(X).ravel()

    return rhs


# --------------------------------------------------------------------------
# leafwise paths


def window(duration: float, margin: float) -> Expr:
    """Cutoff that is exactly 0 on ``[0, margin/2]`` and ``[d - margin/2, inf)``."""
    t = var(TIME)
    d, e = float(duration), float(margin)
    up = bump(t, e / 2, e)
    down = sub(ONE, bump(t, d - e, d - e / 2))
    return mul(up, down)


@dataclass(frozen=True)
class Segment:
    """One stretch of a leafwise path in its own local time ``[0, duration]``.

    The field driven along the segment is ``sum_i w(t) c_i(t, x) X_i``.  A
    reversed segment runs the stored data backwards: its coefficients are
    ``-c_i(d - t, x)`` and its window ``w(d - t)``.
    """

    coeffs: tuple[Expr, ...]
    duration: float
    margin: float
    reversed: bool = False

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if not 0 < self.margin < self.duration / 4:
            raise ValueError("sitting margin must lie in (0, duration/4)")

    def flipped(self) -> "Segment":
        return Segment(self.coeffs, self.duration, self.margin, not self.reversed)

    def local_coeffs(self) -> tuple[Expr, ...]:
        if not self.reversed:
            return self.coeffs
        back = {TIME: sub(const(self.duration), var(TIME))}
        return tuple(simplify(neg(subs(c, back))) for c in self.coeffs)

    def local_window(self) -> Expr:
        w = window(self.duration, self.margin)
        if not self.reversed:
            return w
        return subs(w, {TIME: sub(const(self.duration), var(TIME))})

    def window_value(self, s: float) -> float:
        return evaluate(self.local_window(), {TIME: s})

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)


@lru_cache(maxsize=256)
def segment_field(seg: Segment, foliation: Foliation) -> tuple[Expr, ...]:
    """Base components ``w(t) * sum_i c_i X_i`` of a segment, in local time."""
    w = seg.local_window()
    cs = seg.local_coeffs()
    comps = []
    for j in range(foliation.chart.n_base):
        terms = [mul(c, g.components[j]) for c, g in zip(cs, foliation.generators)]
        comps.append(simplify(mul(w, add(*terms))))
    return tuple(comps)


@dataclass(frozen=True, eq=False)
class LeafwisePath:
    """A morphism of the leafwise path category at finite resolution."""

    foliation: Foliation
    start: tuple[float, ...]
    segments: tuple[Segment, ...]
    trajectory: FlowResult = field(repr=False)
    tol: float = 1e-9

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def end(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.trajectory.endpoint)

    def segment_starts(self) -> list[float]:
        out, acc = [], 0.0
        for s in self.segments:
            out.append(acc)
            acc += s.duration
        return out

    def locate(self, t: float) -> tuple[Segment, float]:
        """Segment active at global time ``t`` and the matching local time."""
        acc = 0.0
        for s in self.segments:
            if t < acc + s.duration:
                return s, t - acc
            acc += s.duration
        last = self.segments[-1]
        return last, last.duration + (t - acc)

    def field_at(self, t: float, x) -> np.ndarray:
        """Value of ``X(t)`` at ``x``; zero for ``t`` beyond the duration."""
        if t >= self.duration or t < 0:
            return np.zeros(len(self.start))
        seg, s = self.locate(t)
        comps = segment_field(seg, self.foliation)
        return _compiled(comps, self.foliation.chart.names)(np.concatenate([[s], np.asarray(x, float)]))

    def same_data(self, other: "LeafwisePath") -> bool:
        return (
            self.foliation == other.foliation
            and self.segments == other.segments
            and np.allclose(self.start, other.start, atol=0, rtol=0)
        )

    def retrace(self, tol: float) -> "LeafwisePath":
        """Recompute the trajectory from the stored coefficients at ``tol``."""
        traj = _trace(self.foliation, self.start, self.segments, tol)
        return LeafwisePath(self.foliation, self.start, self.segments, traj, tol)


def _trace(fol: Foliation, x0, segments: Sequence[Segment], tol: float) -> FlowResult:
    ts, ys = [np.array([0.0])], [np.atleast_2d(np.asarray(x0, float))]
    y = np.asarray(x0, float)
    offset = 0.0
    dys = [np.zeros((1, len(y)))]
    n_steps = n_rej = 0
    max_err = 0.0
    for seg in segments:
        if seg.is_zero():
            res = FlowResult(np.array([0.0, seg.duration]), np.vstack([y, y]), np.zeros((2, len(y))))
        else:
            comps = segment_field(seg, fol)
            res = integrate(
                comps,
                y,
                0.0,
                seg.duration,
                tol=tol,
                box=fol.chart.box,
                h_max=seg.duration / 8,
                coords=fol.chart.names,
            )
        ts.append(res.t[1:] + offset)
        ys.append(res.y[1:])
        dys.append(res.dy[1:])
        n_steps += res.n_steps
        n_rej += res.n_rejected
        max_err = max(max_err, res.max_error)
        y = res.endpoint
        offset += seg.duration
    return FlowResult(np.concatenate(ts), np.vstack(ys), np.vstack(dys), n_steps, n_rej, max_err)


def _coeff_tuple(foliation: Foliation, coeffs) -> tuple[Expr, ...]:
    from .symexpr import parse_expr

    allowed = set(foliation.chart.names) | {TIME}

    def conv(c):
        if isinstance(c, Expr):
            e = c
        elif isinstance(c, str):
            e = parse_expr(c, allowed)
        else:
            e = const(float(c))
        extra = e.free_vars - allowed
        if extra:
            raise ValueError(f"path coefficient {e} mentions {sorted(extra)}")
        return e

    if isinstance(coeffs, Mapping):
        unknown = set(coeffs) - set(foliation.names)
        if unknown:
            raise KeyError(f"unknown generator {sorted(unknown)[0]!r}")
        return tuple(conv(coeffs.get(n, ZERO)) for n in foliation.names)
    coeffs = tuple(coeffs)
    if len(coeffs) != len(foliation.generators):
        raise ValueError("need one coefficient per generator")
    return tuple(conv(c) for c in coeffs)


def _foliation_of(ctx) -> Foliation:
    if isinstance(ctx, Foliation):
        return ctx
    fol = getattr(ctx, "foliation", None)
    if isinstance(fol, Foliation):
        return fol
    raise TypeError("path context must be a Foliation or a Connection")


def make_path(ctx, x0, duration: float, margin: float | None = None, coeffs=None, tol: float = 1e-9) -> LeafwisePath:
    """Leafwise path starting at ``x0`` driven by ``sum_i w(t) c_i(t, x) X_i``.

    ``margin`` defaults to a tenth of the duration; ``coeffs`` maps generator
    names (or positions) to expressions over ``t`` and the base coordinates.
    """
    fol = _foliation_of(ctx)
    d = float(duration)
    e = d / 10 if margin is None else float(margin)
    cs = _coeff_tuple(fol, coeffs if coeffs is not None else {})
    seg = Segment(cs, d, e)
    x0 = tuple(float(v) for v in x0)
    if len(x0) != fol.chart.n_base:
        raise ValueError("start point has the wrong dimension")
    if not fol.chart.contains(x0):
        raise DomainExitError(f"start point {x0} lies outside the chart", 0.0)
    traj = _trace(fol, x0, (seg,), tol)
    return LeafwisePath(fol, x0, (seg,), traj, tol)


def constant_path(ctx, x0, duration: float = 1.0) -> LeafwisePath:
    return make_path(ctx, x0, duration)


def concatenate(p1: LeafwisePath, p2: LeafwisePath, tol: float = 1e-7) -> LeafwisePath:
    """The product ``p1 . p2``: run ``p2`` first, then ``p1``."""
    if p1.foliation != p2.foliation:
        raise ValueError("paths belong to different foliations")
    gap = float(np.max(np.abs(np.subtract(p2.end, p1.start))))
    if gap > tol:
        raise ValueError(f"junction mismatch: end of second path is {gap:.3g} away from start of first")
    a, b = p2.trajectory, p1.trajectory
    d2 = p2.duration
    traj = FlowResult(
        np.concatenate([a.t, b.t[1:] + d2]),
        np.vstack([a.y, b.y[1:]]),
        np.vstack([a.dy, b.dy[1:]]),
        a.n_steps + b.n_steps,
        a.n_rejected + b.n_rejected,
        max(a.max_error, b.max_error),
    )
    return LeafwisePath(p2.foliation, p2.start, p2.segments + p1.segments, traj, max(p1.tol, p2.tol))


def invert(p: LeafwisePath) -> LeafwisePath:
    """Run ``p`` backwards: ``gamma^{-1}(t) = gamma(d - t)``."""
    tr = p.trajectory
    d = p.duration
    traj = FlowResult(
        (d - tr.t)[::-1].copy(),
        tr.y[::-1].copy(),
        -tr.dy[::-1],
        tr.n_steps,
        tr.n_rejected,
        tr.max_error,
    )
    segs = tuple(s.flipped() for s in reversed(p.segments))
    return LeafwisePath(p.foliation, p.end, segs, traj, p.tol)


def exposure(duration: float, margin: float) -> float:
    """``integral_0^d w(t) dt`` for the standard window.

    Each ramp integrates to a quarter of the margin because the cutoff
    satisfies ``h(s) + h(1 - s) = 1``, so the total is ``d - 3*margin/2``.
    """
    return float(duration) - 1.5 * float(margin)
