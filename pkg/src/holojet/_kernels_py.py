"""Pure-Python program runner, used when the compiled kernel is unavailable.

Each program is turned into Python source once (one local per slot, domain
checks inlined) and ``exec``-ed into a closure, which is considerably faster
than interpreting the instruction stream op by op.
"""
from __future__ import annotations

import math

from ._bump import bump_derivative

_FN = {6: "_sin", 7: "_cos", 8: "_exp", 9: None, 10: "_tanh"}


class _Bad(Exception):
    pass


def _powq(x: float, num: int, den: int) -> float:
    if x < 0.0:
        if den % 2 == 0:
            raise _Bad
        mag = (-x) ** (num / den)
        return -mag if num % 2 else mag
    if x == 0.0 and num < 0:
        raise _Bad
    return x ** (num / den)


def _source(prog) -> str:
    nin = prog.n_in
    nc = prog.n_consts
    base = nin + nc
    lines = ["def _run(X, Y):", "    for r, row in enumerate(X):"]
    if nin:
        names = ", ".join(f"v{k}" for k in range(nin))
        lines.append(f"        {names}{',' if nin == 1 else ''} = row")
    for k in range(nc):
        lines.append(f"        v{nin + k} = {float(prog.consts[k])!r}")
    for k in range(len(prog.op)):
        c = int(prog.op[k])
        a = f"v{int(prog.a1[k])}"
        b = f"v{int(prog.a2[k])}"
        out = f"v{base + k}"
        p0, p1, p2 = (float(t) for t in prog.par[k])
        if c == 0:
            lines.append(f"        {out} = {a} + {b}")
        elif c == 1:
            lines.append(f"        {out} = {a} * {b}")
        elif c == 2:
            lines.append(f"        {out} = -{a}")
        elif c == 3:
            lines.append(f"        if {b} == 0.0: return r")
            lines.append(f"        {out} = {a} / {b}")
        elif c == 4:
            n = int(p0)
            if n < 0:
                lines.append(f"        if {a} == 0.0: return r")
            lines.append(f"        {out} = {a} ** {n}")
        elif c == 5:
            lines.append(f"        {out} = _powq({a}, {int(p0)}, {int(p1)})")
        elif c == 9:
            lines.append(f"        if {a} <= 0.0: return r")
            lines.append(f"        {out} = _log({a})")
        elif c in _FN:
            lines.append(f"        {out} = {_FN[c]}({a})")
        else:
            lines.append(f"        {out} = _bump({a}, {p0!r}, {p1!r}, {int(p2)})")
    for j, s in enumerate(prog.outs):
        lines.append(f"        Y[r][{j}] = v{int(s)}")
    lines.append("    return -1")
    return "\n".join(lines)


def make_runner(prog):
    ns = {
        "_sin": math.sin,
        "_cos": math.cos,
        "_exp": math.exp,
        "_log": math.log,
        "_tanh": math.tanh,
        "_bump": bump_derivative,
        "_powq": _powq,
    }
    exec(compile(_source(prog), "<holojet-program>", "exec"), ns)
    run = ns["_run"]
    isfinite = math.isfinite

    def runner(X, Y) -> int:
        rows = X.tolist()
        out = [[0.0] * Y.shape[1] for _ in rows]
        try:
            bad = run(rows, out)
        except (_Bad, OverflowError, ValueError, ZeroDivisionError):
            bad = _first_failing(run, rows, Y.shape[1])
        if bad >= 0:
            return bad
        for r, vals in enumerate(out):
            for v in vals:
                if not isfinite(v):
                    return r
        if rows:
            Y[:, :] = out
        return -1

    return runner


def _first_failing(run, rows, nout) -> int:
    for r, row in enumerate(rows):
        try:
            if run([row], [[0.0] * nout]) >= 0:
                return r
        except (_Bad, OverflowError, ValueError, ZeroDivisionError):
            return r
    return 0
