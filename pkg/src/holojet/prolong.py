"""Total derivatives and jet prolongations of projectable vector fields.

The production path is the first-order recursion

    phi_()   = b
    phi_{Ii} = D_i(phi_I) - (D_i a^j) f_{Ij}

and :func:`prolong_direct` evaluates the closed formula (total derivatives of
``b - a^i f_i`` below the top order, explicit Leibniz sums with binomial
multiplicities at the top order) as an independent cross-check.  Time ``t``
is an inert parameter throughout: it is never differentiated.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .geometry import TIME, ProjField
from .multiindex import JetLayout, MultiIndex, append, strict_subsets
from .symexpr import ZERO, Expr, add, const, diff, mul, neg, simplify, sub

__all__ = [
    "JetField",
    "OrderOverflowError",
    "ExpressionTooLargeError",
    "MAX_NODES",
    "jet_layout",
    "total_derivative",
    "prolong",
    "prolong_direct",
    "vertical_prolong",
    "contact_apply",
    "format_jetfield",
]

MAX_NODES = 20_000


class OrderOverflowError(ValueError):
    pass


class ExpressionTooLargeError(RuntimeError):
    pass


@dataclass(frozen=True)
class JetField:
    """A vector field on jet space.

    For a full prolongation ``a`` holds the base components and ``phi`` one
    component per jet coordinate of the layout.  A vertical field has zero
    base part and components only for jet coordinates of order below ``k``.
    """

    layout: JetLayout
    a: tuple[Expr, ...]
    phi: tuple[Expr, ...]
    vertical: bool = False

    def __post_init__(self):
        if self.vertical:
            k = self.layout.order
            want = self.layout.n_coords_of_order(k - 1) if k > 0 else 0
        else:
            want = self.layout.jet_dim
        if len(self.phi) != want:
            raise ValueError(f"expected {want} jet components, got {len(self.phi)}")
        allowed = set(self.layout.coord_names) | {TIME}
        for c in self.a + self.phi:
            extra = c.free_vars - allowed
            if extra:
                raise ValueError(f"component {c} mentions coordinates outside the layout: {sorted(extra)}")

    @property
    def order(self) -> int:
        return self.layout.order

    def component(self, a: int, I: MultiIndex) -> Expr:
        idx = self.layout.index(a, I)
        if idx >= len(self.phi):
            return ZERO
        return self.phi[idx]

    def full_components(self) -> tuple[Expr, ...]:
        """Components over all layout coordinates (base first), zero-padded."""
        base = self.a if self.a else tuple(ZERO for _ in self.layout.base_names)
        pad = self.layout.jet_dim - len(self.phi)
        return base + self.phi + tuple(ZERO for _ in range(pad))

    def truncate(self, order: int) -> "JetField":
        lay = self.layout.truncate(order)
        if self.vertical:
            n = lay.n_coords_of_order(order - 1) if order > 0 else 0
        else:
            n = lay.jet_dim
        return JetField(lay, self.a, self.phi[:n], self.vertical)

    def size(self) -> int:
        return max((c.size() for c in self.a + self.phi), default=0)


def jet_layout(X: ProjField, k: int) -> JetLayout:
    B = X.bundle
    return JetLayout(B.base.names, B.fibre_names, k)


@lru_cache(maxsize=64)
def _name_table(layout: JetLayout) -> dict[str, tuple[int, MultiIndex]]:
    return {layout.name(a, I): (a, I) for a, I in layout.jet_coords}


def total_derivative(e: Expr, i: int, layout: JetLayout) -> Expr:
    """``D_i e`` on the order-``k`` jet space of ``layout``.

    ``e`` must only involve jet coordinates of order below ``k``.
    """
    k = layout.order
    table = _name_table(layout)
    terms = [diff(e, layout.base_names[i])]
    for name in sorted(e.free_vars):
        hit = table.get(name)
        if hit is None:
            continue
        a, I = hit
        if len(I) >= k:
            raise OrderOverflowError(
                f"D_{layout.base_names[i]} of an expression in {name} leaves the order-{k} jet space"
            )
        d = diff(e, name)
        if not d.is_zero():
            terms.append(mul(layout.var(a, append(I, i)), d))
    return simplify(add(*terms))


def _total_derivative_multi(e: Expr, I: MultiIndex, layout: JetLayout) -> Expr:
    for i in I:
        e = total_derivative(e, i, layout)
    return e


def _check_size(e: Expr, max_nodes: int) -> Expr:
    if e.size() > max_nodes:
        raise ExpressionTooLargeError(
            f"prolongation component exceeds {max_nodes} nodes; use a lower jet order"
        )
    return e


def _base_partial(e: Expr, J: MultiIndex, layout: JetLayout) -> Expr:
    for j in J:
        e = diff(e, layout.base_names[j])
    return e


def prolong(X: ProjField, k: int, max_nodes: int = MAX_NODES) -> JetField:
    """k-jet prolongation of a projectable field by the first-order recursion."""
    if k < 0:
        raise ValueError("jet order must be non-negative")
    layout = jet_layout(X, k)
    n = layout.n_base
    da = [[simplify(diff(X.a[j], layout.base_names[i])) for j in range(n)] for i in range(n)]
    phi: dict[tuple[int, MultiIndex], Expr] = {}
    for a in range(layout.n_fibre):
        phi[(a, ())] = simplify(X.b[a])
    for a, I in layout.jet_coords:
        if not I:
            continue
        i, prev = I[-1], I[:-1]
        terms = [total_derivative(phi[(a, prev)], i, layout)]
        for j in range(n):
            if not da[i][j].is_zero():
                terms.append(neg(mul(da[i][j], layout.var(a, append(prev, j)))))
        phi[(a, I)] = _check_size(simplify(add(*terms)), max_nodes)
    comps = tuple(phi[c] for c in layout.jet_coords)
    return JetField(layout, tuple(X.a), comps)


def _characteristic(X: ProjField, layout: JetLayout) -> list[Expr]:
    """``b^a - a^i f^a_i`` for each fibre index."""
    out = []
    for a in range(layout.n_fibre):
        terms = [X.b[a]]
        for i in range(layout.n_base):
            if not X.a[i].is_zero():
                terms.append(neg(mul(X.a[i], layout.var(a, (i,)))))
        out.append(simplify(add(*terms)))
    return out


def prolong_direct(X: ProjField, k: int) -> JetField:
    """k-jet prolongation from the closed formula with explicit multiplicities."""
    layout = jet_layout(X, k)
    n = layout.n_base
    Q = _characteristic(X, layout) if k >= 1 else []
    comps = []
    for a, I in layout.jet_coords:
        if len(I) < k:
            terms = [_total_derivative_multi(Q[a], I, layout)]
            for i in range(n):
                if not X.a[i].is_zero():
                    terms.append(mul(X.a[i], layout.var(a, append(I, i))))
        else:
            terms = [_total_derivative_multi(X.b[a], I, layout)]
            for J, rest, m in strict_subsets(I):
                for i in range(n):
                    dai = _base_partial(X.a[i], rest, layout)
                    if dai.is_zero():
                        continue
                    terms.append(neg(mul(const(m), dai, layout.var(a, append(J, i)))))
        comps.append(simplify(add(*terms)))
    return JetField(layout, tuple(X.a), tuple(comps))


def vertical_prolong(X: ProjField, k: int) -> JetField:
    """Components ``D_I(b^a - a^i f^a_i)`` for ``|I| < k``; zero field when ``k == 0``."""
    layout = jet_layout(X, k)
    if k == 0:
        return JetField(layout, (), (), vertical=True)
    Q = _characteristic(X, layout)
    comps = []
    for a, I in layout.truncate(k - 1).jet_coords:
        comps.append(_total_derivative_multi(Q[a], I, layout))
    return JetField(layout, (), tuple(comps), vertical=True)


def contact_apply(V: JetField) -> JetField:
    """Apply the order-k contact form: ``phi_I - f_{Ii} a^i`` for ``|I| < k``."""
    if V.vertical:
        raise ValueError("contact form is applied to full jet fields")
    layout = V.layout
    k = layout.order
    if k == 0:
        return JetField(layout, (), (), vertical=True)
    comps = []
    for a, I in layout.truncate(k - 1).jet_coords:
        terms = [V.component(a, I)]
        for i in range(layout.n_base):
            if not V.a[i].is_zero():
                terms.append(neg(mul(layout.var(a, append(I, i)), V.a[i])))
        comps.append(simplify(add(*terms)))
    return JetField(layout, (), tuple(comps), vertical=True)


def format_jetfield(V: JetField) -> str:
    """One ``coordinate: component`` line per nonzero component."""
    lay = V.layout
    lines = []
    if not V.vertical:
        for name, c in zip(lay.base_names, V.a):
            lines.append(f"d/d{name}: {c}")
    for (a, I), c in zip(lay.jet_coords, V.phi):
        lines.append(f"d/d{lay.name(a, I)}: {c}")
    return "\n".join(lines)


def jet_field_bracket(V: JetField, W: JetField) -> tuple[Expr, ...]:
    """Components of ``[V, W]`` over all layout coordinates."""
    from .geometry import bracket

    if V.layout != W.layout:
        raise ValueError("jet fields live on different layouts")
    return bracket(V.full_components(), W.full_components(), V.layout.coord_names)


def difference_field(V: JetField, W: JetField) -> tuple[Expr, ...]:
    return tuple(simplify(sub(p, q)) for p, q in zip(V.full_components(), W.full_components()))
