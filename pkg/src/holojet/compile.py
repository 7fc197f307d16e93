"""Lowering of expression lists to straight-line programs.

A :class:`Program` evaluates several expressions at once over a fixed input
ordering.  Shared subtrees are computed once.  The instruction stream is run
by the compiled kernel when it is available and by generated Python code
otherwise; both report domain violations, which are then pinned to the
offending subexpression by re-evaluating the failing point on the tree.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _backend
from .symexpr import DomainError, Expr, UnboundVariableError, evaluate

__all__ = ["Program", "compile_exprs"]

# opcodes shared with the kernels
ADD, MUL, NEG, DIV, POWI, POWQ, SIN, COS, EXP, LOG, TANH, BUMP = range(12)
_FN_OPS = {"sin": SIN, "cos": COS, "exp": EXP, "log": LOG, "tanh": TANH}


class Program:
    """Straight-line evaluation of ``exprs`` as functions of ``inputs``."""

    def __init__(self, exprs: Sequence[Expr], inputs: Sequence[str], backend: str | None = None):
        self.exprs = tuple(exprs)
        self.inputs = tuple(inputs)
        fv = frozenset().union(*(e.free_vars for e in self.exprs)) if self.exprs else frozenset()
        missing = fv.difference(self.inputs)
        if missing:
            raise UnboundVariableError(sorted(missing)[0])
        self._lower()
        self.backend = backend or _backend.NAME
        self._impl = _backend.make_runner(self, self.backend)

    def _lower(self) -> None:
        nin = len(self.inputs)
        slot_of: dict[Expr, int] = {}
        consts: list[float] = []
        const_slot: dict[float, int] = {}
        ops: list[tuple[int, int, int, float, float, float]] = []
        for i, name in enumerate(self.inputs):
            slot_of[Expr("var", (), name)] = i

        # constants first so instruction slots are contiguous
        def collect_consts(e: Expr, seen: set):
            stack = [e]
            while stack:
                x = stack.pop()
                if x in seen:
                    continue
                seen.add(x)
                if x.op == "const" and x.val not in const_slot:
                    const_slot[x.val] = len(consts)
                    consts.append(x.val)
                stack.extend(x.args)

        seen: set[Expr] = set()
        for e in self.exprs:
            collect_consts(e, seen)
        nc = len(consts)
        for v, k in const_slot.items():
            slot_of[Expr("const", (), v)] = nin + k

        def emit(op, a, b=0, p0=0.0, p1=0.0, p2=0.0) -> int:
            ops.append((op, a, b, p0, p1, p2))
            return nin + nc + len(ops) - 1

        def lower(e: Expr) -> int:
            # iterative post-order to survive deep trees
            stack = [(e, False)]
            while stack:
                x, ready = stack.pop()
                if x in slot_of:
                    continue
                if not ready:
                    stack.append((x, True))
                    stack.extend((a, False) for a in x.args if a not in slot_of)
                    continue
                args = [slot_of[a] for a in x.args]
                op = x.op
                if op == "add" or op == "mul":
                    code = ADD if op == "add" else MUL
                    s = args[0]
                    for a in args[1:]:
                        s = emit(code, s, a)
                elif op == "neg":
                    s = emit(NEG, args[0])
                elif op == "div":
                    s = emit(DIV, args[0], args[1])
                elif op == "pow":
                    q = x.val
                    if q.denominator == 1:
                        s = emit(POWI, args[0], 0, float(q.numerator))
                    else:
                        s = emit(POWQ, args[0], 0, float(q.numerator), float(q.denominator))
                elif op == "fn":
                    s = emit(_FN_OPS[x.val], args[0])
                elif op == "bump":
                    lo, hi, n = x.val
                    s = emit(BUMP, args[0], 0, lo, hi, float(n))
                else:  # pragma: no cover
                    raise ValueError(f"cannot lower node {op!r}")
                slot_of[x] = s
            return slot_of[e]

        outs = [lower(e) for e in self.exprs]
        self.n_consts = nc
        self.consts = np.array(consts, dtype=np.float64)
        arr = np.array(ops, dtype=np.float64).reshape(-1, 6)
        self.op = arr[:, 0].astype(np.int32)
        self.a1 = arr[:, 1].astype(np.int32)
        self.a2 = arr[:, 2].astype(np.int32)
        self.par = np.ascontiguousarray(arr[:, 3:6])
        self.outs = np.array(outs, dtype=np.int32)
        self.n_slots = nin + nc + len(ops)

    @property
    def n_in(self) -> int:
        return len(self.inputs)

    @property
    def n_out(self) -> int:
        return len(self.exprs)

    def __len__(self) -> int:
        return len(self.op)

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at every row of ``X`` (shape ``(npts, n_in)``)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ValueError(f"expected input of shape (n, {self.n_in}), got {X.shape}")
        Y = np.empty((X.shape[0], self.n_out), dtype=np.float64)
        bad = self._impl(X, Y)
        if bad >= 0:
            self._raise_at(X[bad])
        return Y

    def __call__(self, x) -> np.ndarray:
        return self.batch(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]

    def _raise_at(self, row: np.ndarray):
        env = dict(zip(self.inputs, map(float, row)))
        for e in self.exprs:
            evaluate(e, env)  # raises with the offending subexpression
        raise DomainError("non-finite intermediate value", self.exprs[0])


def compile_exprs(exprs: Sequence[Expr], inputs: Sequence[str], backend: str | None = None) -> Program:
    return Program(exprs, inputs, backend)
