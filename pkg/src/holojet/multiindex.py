"""Multi-indices and jet coordinate layouts.

A multi-index is a sorted tuple of 0-based base-coordinate indices, so
``(0, 0, 1)`` stands for two derivatives in the first coordinate and one in
the second.  Sorting picks one representative per symmetric class.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement, product
from math import comb

from .symexpr import Expr, var

__all__ = ["MultiIndex", "enumerate_indices", "append", "strict_subsets", "JetLayout"]

MultiIndex = tuple[int, ...]


def enumerate_indices(n_base: int, k: int) -> list[MultiIndex]:
    """All multi-indices of length at most ``k``, graded then lexicographic."""
    if n_base < 1 or k < 0:
        raise ValueError("need n_base >= 1 and k >= 0")
    out: list[MultiIndex] = []
    for order in range(k + 1):
        out.extend(combinations_with_replacement(range(n_base), order))
    return out


def append(I: MultiIndex, i: int) -> MultiIndex:
    if i < 0:
        raise ValueError(f"invalid base index {i}")
    return tuple(sorted(I + (i,)))


def remove(I: MultiIndex, J: MultiIndex) -> MultiIndex:
    """Multiset difference ``I \\ J``; ``J`` must be contained in ``I``."""
    c = Counter(I)
    c.subtract(J)
    if any(v < 0 for v in c.values()):
        raise ValueError(f"{J} is not contained in {I}")
    return tuple(sorted(c.elements()))


def strict_subsets(I: MultiIndex) -> list[tuple[MultiIndex, MultiIndex, int]]:
    """Sub-multisets ``J`` of ``I`` other than ``I`` itself.

    Each entry is ``(J, I \\ J, multiplicity)`` where the multiplicity counts
    how often the split occurs in the Leibniz expansion of ``D_I(a*g)``,
    i.e. the product over coordinates of binomial coefficients.
    """
    counts = sorted(Counter(I).items())
    keys = [k for k, _ in counts]
    out = []
    for pick in product(*(range(c + 1) for _, c in counts)):
        J = tuple(k for k, m in zip(keys, pick) for _ in range(m))
        if len(J) == len(I):
            continue
        mult = 1
        for (_, c), m in zip(counts, pick):
            mult *= comb(c, m)
        out.append((J, remove(I, J), mult))
    out.sort(key=lambda t: (len(t[0]), t[0]))
    return out


@dataclass(frozen=True)
class JetLayout:
    """Coordinates of the k-jet bundle of a trivial bundle.

    Base coordinates come first, then the fibre-derivative coordinates
    ``f^a_I`` ordered by ``(|I|, I, a)``, so the order-``l`` layout is always
    a prefix of the order-``k`` one.
    """

    base_names: tuple[str, ...]
    fibre_names: tuple[str, ...]
    order: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("jet order must be non-negative")
        idx = {c: i for i, c in enumerate(self.jet_coords)}
        object.__setattr__(self, "_index", idx)
        names = self.base_names + tuple(self.name(a, I) for a, I in self.jet_coords)
        if len(set(names)) != len(names):
            raise ValueError("jet coordinate names collide; rename base or fibre coordinates")

    @classmethod
    def default(cls, n_base: int, n_fibre: int, order: int) -> "JetLayout":
        return cls(
            tuple(f"x{i + 1}" for i in range(n_base)),
            tuple(f"f{a + 1}" for a in range(n_fibre)),
            order,
        )

    @property
    def n_base(self) -> int:
        return len(self.base_names)

    @property
    def n_fibre(self) -> int:
        return len(self.fibre_names)

    @cached_property
    def indices(self) -> list[MultiIndex]:
        return enumerate_indices(self.n_base, self.order)

    @cached_property
    def jet_coords(self) -> list[tuple[int, MultiIndex]]:
        return [(a, I) for I in self.indices for a in range(self.n_fibre)]

    @property
    def jet_dim(self) -> int:
        """Dimension of the jet fibre, ``n_fibre * C(n_base + k, k)``."""
        return self.n_fibre * comb(self.n_base + self.order, self.order)

    @property
    def dim(self) -> int:
        return self.n_base + self.jet_dim

    def index(self, a: int, I: MultiIndex) -> int:
        """Position of ``f^a_I`` among the jet coordinates."""
        return self._index[(a, tuple(sorted(I)))]

    def name(self, a: int, I: MultiIndex) -> str:
        f = self.fibre_names[a]
        if not I:
            return f
        return f + "_" + "".join(self.base_names[i] for i in I)

    def var(self, a: int, I: MultiIndex) -> Expr:
        return var(self.name(a, I))

    @cached_property
    def jet_names(self) -> list[str]:
        return [self.name(a, I) for a, I in self.jet_coords]

    @cached_property
    def coord_names(self) -> list[str]:
        """Base names followed by jet names, the layout order used everywhere."""
        return list(self.base_names) + self.jet_names

    def truncate(self, order: int) -> "JetLayout":
        if not 0 <= order <= self.order:
            raise ValueError(f"cannot truncate order {self.order} layout to {order}")
        return JetLayout(self.base_names, self.fibre_names, order)

    def n_coords_of_order(self, order: int) -> int:
        """Number of jet coordinates of order at most ``order``."""
        return self.n_fibre * comb(self.n_base + order, order)

    def order_of_name(self) -> dict[str, int]:
        return {self.name(a, I): len(I) for a, I in self.jet_coords}
