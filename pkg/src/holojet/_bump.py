"""Smooth cutoff ``bump(t; a, b)`` and its derivatives, evaluated in pure Python.

The cutoff is ``h((t - a) / (b - a))`` with ``h(s) = g(s) / (g(s) + g(1 - s))``
and ``g(s) = exp(-1/s)`` for ``s > 0``, ``0`` otherwise.  On ``(0, 1)`` this is
the logistic function of ``u(s) = 1/(1 - s) - 1/s``; derivatives of any order
come from truncated Taylor arithmetic on that composition, so no derivative is
ever taken by differencing.  Outside ``(a, b)`` every value is returned by
rule: exactly 0 or 1 for the function, exactly 0 for derivatives.

The compiled kernel mirrors this routine operation for operation.
"""
from __future__ import annotations

import math

MAX_ORDER = 24
# beyond this |u| every derivative underflows double precision
_U_CUTOFF = 700.0


def _exp_series(v: list[float], n: int) -> list[float]:
    y = [0.0] * (n + 1)
    y[0] = math.exp(v[0])
    for m in range(1, n + 1):
        acc = 0.0
        for j in range(1, m + 1):
            acc += j * v[j] * y[m - j]
        y[m] = acc / m
    return y


def bump_derivative(t: float, a: float, b: float, n: int = 0) -> float:
    """n-th derivative in ``t`` of the cutoff that rises from 0 at ``a`` to 1 at ``b``."""
    if n < 0 or n > MAX_ORDER:
        raise ValueError(f"bump derivative order must lie in [0, {MAX_ORDER}]")
    width = b - a
    s = (t - a) / width
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0 if n == 0 else 0.0
    u0 = 1.0 / (1.0 - s) - 1.0 / s
    if n == 0:
        if u0 <= 0.0:
            e = math.exp(u0)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(-u0))
    if abs(u0) > _U_CUTOFF:
        return 0.0
    # Taylor coefficients of u(s + eps)
    u = [0.0] * (n + 1)
    sp = 1.0 / s
    qp = 1.0 / (1.0 - s)
    sj, qj = sp, qp
    for j in range(n + 1):
        u[j] = qj - (sj if j % 2 == 0 else -sj)
        sj *= sp
        qj *= qp
    if u0 <= 0.0:
        # h = P / (1 + P), P = exp(u)
        num = _exp_series(u, n)
    else:
        # h = 1 / (1 + Q), Q = exp(-u)
        num = [1.0] + [0.0] * n
        u = [-c for c in u]
    p = _exp_series(u, n) if u0 > 0.0 else num
    den = [1.0 + p[0]] + p[1:]
    h = [0.0] * (n + 1)
    for m in range(n + 1):
        acc = num[m]
        for j in range(1, m + 1):
            acc -= den[j] * h[m - j]
        h[m] = acc / den[0]
    return math.factorial(n) * h[n] / width**n
