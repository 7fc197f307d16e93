"""Invariant jets: the solution set of the vertical-prolongation constraints.

For a connection whose fibre components are affine in the fibre coordinates,
every component of ``vp^k(l(X))`` is an affine function of the jet
coordinates at a fixed base point, so the invariant fibre is an affine
subspace computed with an SVD.  General connections are handled by direct
residual evaluation and a nonlinear least-squares probe.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .compile import Program
from .connection import Connection
from .geometry import ProjField
from .multiindex import JetLayout
from .prolong import vertical_prolong
from .symexpr import Expr, diff, simplify
from .transport import JetPoint

__all__ = [
    "NonAffineConnectionError",
    "ConstraintSystem",
    "InvariantFibre",
    "invariance_constraints",
    "invariant_fibre",
    "residual_check",
    "has_enough_conservation_laws",
    "EnoughReport",
    "RANK_TOL",
]

RANK_TOL = 1e-10


class NonAffineConnectionError(ValueError):
    pass


@lru_cache(maxsize=256)
def _vp(L: ProjField, k: int):
    return vertical_prolong(L, k)


@lru_cache(maxsize=128)
def _affine_program(c: Connection, k: int) -> tuple[Program, list[str], int]:
    """Program returning, per constraint, its offset and jet coefficients."""
    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    jet = layout.jet_names
    exprs: list[Expr] = []
    labels: list[str] = []
    low = layout.truncate(k - 1).jet_coords if k > 0 else []
    for name, L in zip(c.names, c.lifts):
        V = _vp(L, k)
        for (a, I), comp in zip(low, V.phi):
            labels.append(f"{name}:{layout.name(a, I)}")
            exprs.append(comp)
            exprs.extend(simplify(diff(comp, v)) for v in jet)
    prog = Program(exprs, layout.coord_names)
    return prog, labels, len(jet)


@dataclass
class ConstraintSystem:
    """Rows ``A j + b = 0`` in the jet coordinates at a base point."""

    layout: JetLayout
    x: tuple[float, ...]
    matrix: np.ndarray
    offset: np.ndarray
    labels: list[str]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def residual(self, jets) -> np.ndarray:
        return self.matrix @ np.asarray(jets, dtype=float) + self.offset

    def nonzero_rows(self, tol: float = 0.0) -> list[int]:
        return [
            r
            for r in range(self.n_rows)
            if np.max(np.abs(self.matrix[r]), initial=0.0) > tol or abs(self.offset[r]) > tol
        ]

    def format_rows(self) -> list[str]:
        """Human-readable ``... = 0`` lines for the nonzero rows."""
        out = []
        names = self.layout.jet_names
        for r in self.nonzero_rows():
            terms = []
            for v, coef in zip(names, self.matrix[r]):
                if coef != 0.0:
                    terms.append(f"{coef:+.12g}*{v}")
            if self.offset[r] != 0.0:
                terms.append(f"{self.offset[r]:+.12g}")
            out.append(f"[{self.labels[r]}] " + " ".join(terms) + " = 0")
        return out


def invariance_constraints(c: Connection, x, k: int) -> ConstraintSystem:
    """Affine constraints ``vp^k(l(X_g))(x, j) = 0`` for every generator ``g``."""
    if k < 0:
        raise ValueError("jet order must be non-negative")
    if not c.affine_fibre:
        raise NonAffineConnectionError(
            "connection is not affine in the fibre coordinates; the invariant set is not an "
            "affine subspace, use residual_check or has_enough_conservation_laws instead"
        )
    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    x = tuple(float(v) for v in x)
    if len(x) != layout.n_base:
        raise ValueError("base point has the wrong dimension")
    if not c.bundle.base.contains(x):
        raise ValueError(f"point {x} lies outside the chart")
    if k == 0:
        return ConstraintSystem(layout, x, np.zeros((0, layout.jet_dim)), np.zeros(0), [])
    prog, labels, nj = _affine_program(c, k)
    vals = prog(np.concatenate([x, np.zeros(nj)])).reshape(len(labels), nj + 1)
    return ConstraintSystem(layout, x, vals[:, 1:].copy(), vals[:, 0].copy(), labels)


@dataclass
class InvariantFibre:
    """Affine subspace of invariant k-jets at a base point."""

    x: tuple[float, ...]
    k: int
    layout: JetLayout
    constraints: ConstraintSystem
    rank: int
    singular_values: np.ndarray
    particular: np.ndarray | None
    directions: np.ndarray
    consistency_residual: float

    @property
    def empty(self) -> bool:
        return self.particular is None

    @property
    def dimension(self) -> int:
        return -1 if self.empty else self.directions.shape[0]

    @property
    def jet_dim(self) -> int:
        return self.layout.jet_dim

    @property
    def message(self) -> str:
        if self.empty:
            return f"no conservation laws of order {self.k} at {self.x}"
        return f"invariant {self.k}-jets at {self.x}: dimension {self.dimension} of {self.jet_dim}"

    @property
    def basis(self) -> list[np.ndarray]:
        """Affine basis: the particular solution and its translates by directions."""
        if self.empty:
            return []
        return [self.particular] + [self.particular + d for d in self.directions]

    def basis_points(self) -> list[JetPoint]:
        return [JetPoint(self.layout, self.x, tuple(b)) for b in self.basis]

    def point(self, coeffs) -> JetPoint:
        """``particular + sum_i coeffs_i * direction_i``."""
        v = self.particular + np.asarray(coeffs, dtype=float) @ self.directions
        return JetPoint(self.layout, self.x, tuple(v))

    def contains(self, jets, tol: float = 1e-8) -> bool:
        r = self.constraints.residual(jets)
        return bool(np.max(np.abs(r), initial=0.0) <= tol)

    def as_dict(self) -> dict:
        return {
            "point": list(self.x),
            "order": self.k,
            "jet_dim": self.jet_dim,
            "dimension": self.dimension,
            "rank": self.rank,
            "empty": self.empty,
            "rank_tol": RANK_TOL,
            "smallest_kept_singular_value": float(self.singular_values[self.rank - 1]) if self.rank else None,
            "coordinates": self.layout.jet_names,
            "basis": [list(map(float, b)) for b in self.basis],
            "constraints": self.constraints.format_rows(),
        }


def invariant_fibre(c: Connection, x, k: int) -> InvariantFibre:
    """Invariant k-jets at ``x`` via a rank-revealing SVD.

    Singular values below ``RANK_TOL`` times the largest are treated as zero.
    """
    cons = invariance_constraints(c, x, k)
    A, b = cons.matrix, cons.offset
    N = cons.layout.jet_dim
    if A.shape[0] == 0 or not np.any(A) and not np.any(b):
        return InvariantFibre(cons.x, k, cons.layout, cons, 0, np.zeros(0), np.zeros(N), np.eye(N), 0.0)
    u, s, vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_TOL * smax)) if smax > 0 else 0
    if rank:
        coef = (u[:, :rank].T @ -b) / s[:rank]
        p0 = vt[:rank].T @ coef
    else:
        p0 = np.zeros(N)
    res = float(np.max(np.abs(A @ p0 + b), initial=0.0))
    dirs = vt[rank:].copy()
    _clean(dirs)
    if res > 1e-9 * max(1.0, float(np.max(np.abs(b), initial=0.0))):
        return InvariantFibre(cons.x, k, cons.layout, cons, rank, s, None, dirs, res)
    p0[np.abs(p0) < 1e-15] = 0.0
    return InvariantFibre(cons.x, k, cons.layout, cons, rank, s, p0, dirs, res)


def _clean(M: np.ndarray) -> None:
    """Deterministic signs and exact zeros for tiny entries, in place."""
    M[np.abs(M) < 1e-14] = 0.0
    for r in range(M.shape[0]):
        nz = np.flatnonzero(M[r])
        if nz.size and M[r, nz[0]] < 0:
            M[r] *= -1


@lru_cache(maxsize=128)
def _residual_program(c: Connection, k: int) -> Program:
    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    exprs = [e for L in c.lifts for e in _vp(L, k).phi]
    return Program(exprs, layout.coord_names)


def residual_check(c: Connection, j: JetPoint, k: int | None = None) -> float:
    """Max over generators and components of ``|vp^k(l(X_g))|`` at ``j``."""
    k = j.order if k is None else k
    if k > j.order:
        raise ValueError("jet point has lower order than requested")
    if k == 0:
        return 0.0
    j = j.truncate(k)
    vals = _residual_program(c, k)(j.array)
    return float(np.max(np.abs(vals), initial=0.0))


@dataclass
class EnoughReport:
    ok: bool
    k: int
    points: list[tuple[float, ...]]
    dims: list[int]
    jet_dim: int
    method: str
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "order": self.k,
            "jet_dim": self.jet_dim,
            "method": self.method,
            "points": [list(p) for p in self.points],
            "dims": list(self.dims),
            "notes": list(self.notes),
        }


def _nonlinear_dim(c: Connection, x, k: int) -> int:
    """Local dimension of the invariant set near a least-squares solution, or -1."""
    from scipy.optimize import least_squares

    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    prog = _residual_program(c, k)
    x = np.asarray(x, dtype=float)
    N = layout.jet_dim
    if prog.n_out == 0:
        return N

    def F(j):
        return prog(np.concatenate([x, j]))

    sol = least_squares(F, np.zeros(N), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if np.max(np.abs(sol.fun), initial=0.0) > 1e-10:
        return -1
    J = sol.jac
    s = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    return N - rank


def has_enough_conservation_laws(c: Connection, points: Sequence, k: int) -> EnoughReport:
    """Whether the invariant k-fibre is nonempty at every sample point."""
    pts = [tuple(map(float, p)) for p in np.atleast_2d(np.asarray(points, dtype=float))]
    layout = JetLayout(c.bundle.base.names, c.bundle.fibre_names, k)
    dims = []
    notes = []
    if c.affine_fibre:
        method = "affine"
        for p in pts:
            fib = invariant_fibre(c, p, k)
            dims.append(fib.dimension)
            if fib.empty:
                notes.append(fib.message)
    else:
        method = "nonlinear least squares"
        for p in pts:
            d = _nonlinear_dim(c, p, k)
            dims.append(d)
            if d < 0:
                notes.append(f"no invariant {k}-jet found at {p}")
    return EnoughReport(all(d >= 0 for d in dims), k, pts, dims, layout.jet_dim, method, notes)
