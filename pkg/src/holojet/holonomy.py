"""Sampled holonomy-equivalence oracle and hierarchy checks.

Two paths with the same source and range are equivalent at order ``k`` when
their transports agree on the invariant k-fibre at the source.  The fibre is
probed with its affine basis plus random points inside it; agreement within
``tol`` is evidence of equivalence, disagreement beyond ``10 * tol`` is proof
of distinctness, and anything in between is reported as inconclusive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .connection import Connection
from .flow import LeafwisePath, concatenate, constant_path, invert
from .invariants import NonAffineConnectionError, invariant_fibre
from .transport import transport_many

__all__ = [
    "EQUIVALENT",
    "DISTINCT",
    "INCONCLUSIVE",
    "HolonomyReport",
    "HierarchyReport",
    "GroupoidReport",
    "probe_jets",
    "holonomy_equivalent",
    "hierarchy_check",
    "groupoid_laws_check",
]

EQUIVALENT = "equivalent"
DISTINCT = "distinct"
INCONCLUSIVE = "inconclusive"

ENDPOINT_TOL = 1e-6


def probe_jets(c: Connection, x, k: int, n_random: int = 8, seed: int = 0) -> tuple[np.ndarray, str]:
    """Full jet states probing the invariant fibre at ``x``.

    Rows are the affine basis of the fibre followed by ``n_random`` random
    affine combinations with coefficients uniform in ``[-1, 1]``.
    """
    if not c.affine_fibre:
        raise NonAffineConnectionError("probe generation needs a connection affine in the fibre")
    fib = invariant_fibre(c, x, k)
    if fib.empty:
        return np.zeros((0, fib.layout.dim)), fib.message
    rng = np.random.default_rng(seed)
    jets = list(fib.basis)
    for _ in range(n_random):
        r = rng.uniform(-1.0, 1.0, fib.directions.shape[0])
        jets.append(fib.particular + r @ fib.directions)
    xs = np.tile(np.asarray(fib.x, dtype=float), (len(jets), 1))
    desc = (
        f"{len(fib.basis)} basis jets + {n_random} random points of the invariant "
        f"{k}-fibre (dimension {fib.dimension} of {fib.jet_dim}), seed {seed}"
    )
    return np.hstack([xs, np.array(jets)]), desc


def _verdict(errs: Sequence[float], tol: float) -> str:
    worst = max(errs, default=0.0)
    if worst <= tol:
        return EQUIVALENT
    if worst > 10 * tol:
        return DISTINCT
    return INCONCLUSIVE


@dataclass
class HolonomyReport:
    paths: tuple[str, str]
    k: int
    tol: float
    source_match: bool
    range_match: bool
    discrepancies: list[float]
    verdict: str
    probes: str
    notes: list[str] = field(default_factory=list)

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies, default=0.0)

    def as_dict(self) -> dict:
        return {
            "paths": list(self.paths),
            "order": self.k,
            "tol": self.tol,
            "source_match": self.source_match,
            "range_match": self.range_match,
            "discrepancies": list(self.discrepancies),
            "max_discrepancy": self.max_discrepancy,
            "verdict": self.verdict,
            "probes": self.probes,
            "notes": list(self.notes),
        }


def _gap(a, b) -> float:
    return float(np.max(np.abs(np.subtract(a, b))))


def holonomy_equivalent(
    c: Connection,
    p1: LeafwisePath,
    p2: LeafwisePath,
    k: int,
    tol: float = 1e-5,
    n_random: int = 8,
    seed: int = 0,
    ode_tol: float = 1e-10,
    names: tuple[str, str] = ("p1", "p2"),
) -> HolonomyReport:
    """Compare ``T(p1)`` and ``T(p2)`` on probes of the invariant k-fibre."""
    src = _gap(p1.start, p2.start) <= ENDPOINT_TOL
    rng_ok = _gap(p1.end, p2.end) <= ENDPOINT_TOL
    if not (src and rng_ok):
        what = "sources" if not src else "ranges"
        return HolonomyReport(
            names, k, tol, src, rng_ok, [], DISTINCT, "none", [f"{what} differ: different groupoid arrows"]
        )
    J, desc = probe_jets(c, p1.start, k, n_random, seed)
    notes = []
    if len(J) == 0:
        return HolonomyReport(names, k, tol, src, rng_ok, [], INCONCLUSIVE, desc, [desc])
    J2 = J.copy()
    J2[:, : len(p2.start)] = p2.start
    e1 = transport_many(c, p1, J, k, ode_tol)
    e2 = transport_many(c, p2, J2, k, ode_tol)
    errs = [float(v) for v in np.max(np.abs(e1 - e2), axis=1)]
    if c.is_trivial or c.affine_fibre:
        notes.append("transport is affine on jets for this connection, so basis probes determine it on the fibre")
    return HolonomyReport(names, k, tol, src, rng_ok, errs, _verdict(errs, tol), desc, notes)


@dataclass
class HierarchyReport:
    paths: tuple[str, str]
    k_max: int
    reports: list[HolonomyReport]
    violations: list[tuple[int, int]]

    @property
    def verdicts(self) -> list[str]:
        return [r.verdict for r in self.reports]

    @property
    def monotone(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "paths": list(self.paths),
            "max_order": self.k_max,
            "verdicts": {str(r.k): r.verdict for r in self.reports},
            "reports": [r.as_dict() for r in self.reports],
            "monotone": self.monotone,
            "violations": [list(v) for v in self.violations],
        }


def monotonicity_violations(verdicts: Sequence[str]) -> list[tuple[int, int]]:
    """Pairs ``(k, l)`` with ``l < k`` where order k is equivalent but order l is distinct."""
    out = []
    for k, vk in enumerate(verdicts):
        if vk != EQUIVALENT:
            continue
        for l in range(k):
            if verdicts[l] == DISTINCT:
                out.append((k, l))
    return out


def hierarchy_check(
    c: Connection,
    p1: LeafwisePath,
    p2: LeafwisePath,
    k_max: int,
    tol: float = 1e-5,
    seed: int = 0,
    names: tuple[str, str] = ("p1", "p2"),
) -> HierarchyReport:
    """Verdicts for ``k = 0..k_max``; a monotonicity violation is an engine bug."""
    reports = [holonomy_equivalent(c, p1, p2, k, tol, seed=seed, names=names) for k in range(k_max + 1)]
    return HierarchyReport(names, k_max, reports, monotonicity_violations([r.verdict for r in reports]))


@dataclass
class LawCheck:
    law: str
    paths: list[str]
    max_discrepancy: float
    passed: bool

    def as_dict(self) -> dict:
        return {"law": self.law, "paths": self.paths, "max_discrepancy": self.max_discrepancy, "passed": self.passed}


@dataclass
class GroupoidReport:
    k: int
    tol: float
    checks: list[LawCheck]

    @property
    def passed(self) -> bool:
        return all(ch.passed for ch in self.checks)

    @property
    def max_discrepancy(self) -> float:
        return max((ch.max_discrepancy for ch in self.checks), default=0.0)

    def as_dict(self) -> dict:
        return {
            "order": self.k,
            "tol": self.tol,
            "passed": self.passed,
            "max_discrepancy": self.max_discrepancy,
            "checks": [ch.as_dict() for ch in self.checks],
        }


def groupoid_laws_check(
    c: Connection,
    paths: Sequence[LeafwisePath],
    k: int,
    tol: float = 1e-5,
    names: Sequence[str] | None = None,
    seed: int = 0,
    ode_tol: float = 1e-10,
) -> GroupoidReport:
    """Unit, inverse and composition laws of ``T`` on invariant-fibre probes.

    Composition is checked for every ordered pair ``(p_i, p_j)`` with
    ``end(p_j) = start(p_i)``.
    """
    names = list(names) if names is not None else [f"p{i}" for i in range(len(paths))]
    checks: list[LawCheck] = []

    def run(p, J):
        return transport_many(c, p, J, k, ode_tol)

    for nm, p in zip(names, paths):
        J, _ = probe_jets(c, p.start, k, seed=seed)
        if len(J) == 0:
            continue
        unit = constant_path(c, p.start, p.duration)
        err = float(np.max(np.abs(run(unit, J) - J)))
        checks.append(LawCheck("unit", [nm], err, err <= tol))
        back = run(invert(p), run(p, J))
        err = float(np.max(np.abs(back - J)))
        checks.append(LawCheck("inverse", [nm], err, err <= tol))
    for i, (ni, pi) in enumerate(zip(names, paths)):
        for j, (nj, pj) in enumerate(zip(names, paths)):
            if _gap(pj.end, pi.start) > 1e-7:
                continue
            J, _ = probe_jets(c, pj.start, k, seed=seed)
            if len(J) == 0:
                continue
            lhs = run(concatenate(pi, pj), J)
            rhs = run(pi, run(pj, J))
            err = float(np.max(np.abs(lhs - rhs)))
            checks.append(LawCheck("composition", [ni, nj], err, err <= tol))
    return GroupoidReport(k, tol, checks)
