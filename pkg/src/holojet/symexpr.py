"""Immutable symbolic scalar expressions.

Expressions are trees of :class:`Expr` nodes.  Two families of constructors
exist: the node constructor ``Expr(op, args, val)`` builds exactly what it is
told (the parser uses it so that printing round-trips), while the module
functions :func:`add`, :func:`mul`, :func:`neg`, ... fold constants and drop
neutral elements as they go.  Differentiation uses the folding constructors,
which keeps derivative trees from filling up with ``0*x`` debris.

Expression text grammar::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?
    atom    := number | name | '(' expr ')'
             | func '(' expr ')'
             | 'bump' '(' expr ';' const ',' const (';' integer)? ')'
    func    := 'sin' | 'cos' | 'exp' | 'log' | 'tanh'

Exponents must be rational constants.  ``bump(t; a, b)`` is 0 for ``t <= a``,
1 for ``t >= b`` and smooth; the optional third slot is a derivative order.
"""
from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from ._bump import MAX_ORDER as _BUMP_MAX_ORDER
from ._bump import bump_derivative
from .lexer import ParseError, Token, tokenize

__all__ = [
    "Expr",
    "ExprError",
    "UnboundVariableError",
    "DomainError",
    "ParseError",
    "FUNCTIONS",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "neg",
    "div",
    "power",
    "func",
    "bump",
    "parse_expr",
    "diff",
    "evaluate",
    "simplify",
    "subs",
    "ZERO",
    "ONE",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "tanh")
RESERVED = frozenset(FUNCTIONS) | {"bump"}


class ExprError(Exception):
    pass


class UnboundVariableError(ExprError):
    def __init__(self, name: str, line: int | None = None, col: int | None = None):
        self.name = name
        self.line = line
        self.col = col
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(f"unbound variable {name!r}{where}")


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation; ``expr`` is the offending node."""

    def __init__(self, msg: str, expr: "Expr"):
        self.expr = expr
        super().__init__(f"{msg} in {expr}")


class Expr:
    """A node of an expression tree.

    ``op`` is one of ``const``, ``var``, ``add``, ``mul``, ``neg``, ``div``,
    ``pow``, ``fn`` or ``bump``.  ``val`` holds the payload: the float of a
    constant, the name of a variable or function, the :class:`Fraction`
    exponent of a power, or the ``(a, b, order)`` triple of a cutoff.
    """

    __slots__ = ("op", "args", "val", "_hash", "_free")

    def __init__(self, op: str, args: tuple["Expr", ...] = (), val=None):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "val", val)
        object.__setattr__(self, "_hash", hash((op, self.args, val)))
        object.__setattr__(self, "_free", None)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (Expr, (self.op, self.args, self.val))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self.op == other.op and self.val == other.val and self.args == other.args

    def __repr__(self) -> str:
        return f"Expr({to_string(self)!r})"

    def __str__(self) -> str:
        return to_string(self)

    # arithmetic sugar, folding
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, q):
        return power(self, q)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_zero(self) -> bool:
        return self.op == "const" and self.val == 0.0

    def is_one(self) -> bool:
        return self.op == "const" and self.val == 1.0

    @property
    def free_vars(self) -> frozenset[str]:
        fv = self._free
        if fv is None:
            if self.op == "var":
                fv = frozenset((self.val,))
            elif not self.args:
                fv = frozenset()
            else:
                fv = frozenset().union(*(a.free_vars for a in self.args))
            object.__setattr__(self, "_free", fv)
        return fv

    def size(self) -> int:
        """Number of distinct subtrees (DAG node count)."""
        seen: set[Expr] = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if e in seen:
                continue
            seen.add(e)
            stack.extend(e.args)
        return len(seen)

    def __call__(self, **env: float) -> float:
        return evaluate(self, env)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, Fraction)):
        return const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


# --------------------------------------------------------------------------
# folding constructors


def const(c: float) -> Expr:
    c = float(c)
    if c == 0.0:
        c = 0.0  # normalise -0.0
    return Expr("const", (), c)


ZERO = const(0.0)
ONE = const(1.0)


def var(name: str) -> Expr:
    return Expr("var", (), name)


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    c = 0.0
    for t in terms:
        parts = t.args if t.op == "add" else (t,)
        for p in parts:
            if p.op == "const":
                c += p.val
            else:
                flat.append(p)
    if c != 0.0:
        flat.append(const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Expr("add", tuple(flat))


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    c = 1.0
    for f in factors:
        parts = f.args if f.op == "mul" else (f,)
        for p in parts:
            if p.op == "const":
                c *= p.val
            else:
                flat.append(p)
    if c == 0.0:
        return ZERO
    if not flat:
        return const(c)
    if c == -1.0:
        inner = flat[0] if len(flat) == 1 else Expr("mul", tuple(flat))
        return Expr("neg", (inner,))
    if c != 1.0:
        flat.insert(0, const(c))
    if len(flat) == 1:
        return flat[0]
    return Expr("mul", tuple(flat))


def neg(a: Expr) -> Expr:
    if a.op == "const":
        return const(-a.val)
    if a.op == "neg":
        return a.args[0]
    if a.op == "mul" and a.args[0].op == "const":
        return mul(const(-a.args[0].val), *a.args[1:])
    return Expr("neg", (a,))


def div(a: Expr, b: Expr) -> Expr:
    if b.op == "const":
        if b.val == 0.0:
            return Expr("div", (a, b))  # left for evaluation to report
        if b.val == 1.0:
            return a
        return mul(const(1.0 / b.val), a) if a.op != "const" else const(a.val / b.val)
    if a.is_zero():
        return ZERO
    return Expr("div", (a, b))


def power(a: Expr, q) -> Expr:
    q = Fraction(q)
    if q == 0:
        return ONE
    if q == 1:
        return a
    if a.op == "const":
        try:
            return const(_pow_value(a.val, q))
        except (ValueError, ZeroDivisionError, OverflowError):
            return Expr("pow", (a,), q)
    if a.op == "pow":
        inner_q = a.val * q
        # (x^p)^q = x^(pq) only when no sign information is lost
        if a.val.numerator % 2 == 1 or q.denominator == 1:
            return power(a.args[0], inner_q)
    return Expr("pow", (a,), q)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if a.op == "const":
        try:
            return const(_FN_IMPL[name](a.val))
        except (ValueError, OverflowError):
            pass
    return Expr("fn", (a,), name)


def bump(a: Expr, lo: float, hi: float, order: int = 0) -> Expr:
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ExprError(f"bump requires a < b, got a={lo}, b={hi}")
    if not 0 <= order <= _BUMP_MAX_ORDER:
        raise ExprError(f"bump derivative order {order} outside [0, {_BUMP_MAX_ORDER}]")
    if a.op == "const":
        return const(bump_derivative(a.val, lo, hi, order))
    return Expr("bump", (a,), (lo, hi, int(order)))


# --------------------------------------------------------------------------
# numeric primitives


def _pow_value(b: float, q: Fraction) -> float:
    if q.denominator == 1:
        n = q.numerator
        if b == 0.0 and n < 0:
            raise ZeroDivisionError("zero to a negative power")
        return b**n
    if b < 0.0:
        if q.denominator % 2 == 0:
            raise ValueError("even root of a negative number")
        mag = (-b) ** (q.numerator / q.denominator)
        return -mag if q.numerator % 2 else mag
    if b == 0.0 and q < 0:
        raise ZeroDivisionError("zero to a negative power")
    return b ** (q.numerator / q.denominator)


def _log(x: float) -> float:
    if x <= 0.0:
        raise ValueError("log of a non-positive number")
    return math.log(x)


_FN_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": _log,
    "tanh": math.tanh,
}


# --------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` under ``env``.

    Raises :class:`UnboundVariableError` for a free variable missing from
    ``env`` and :class:`DomainError` (naming the subexpression) for division
    by zero, logs of non-positive numbers, invalid roots and overflow.
    """
    missing = e.free_vars.difference(env)
    if missing:
        raise UnboundVariableError(sorted(missing)[0])
    cache: dict[Expr, float] = {}
    return _eval(e, env, cache)


def _eval(e: Expr, env, cache) -> float:
    hit = cache.get(e)
    if hit is not None:
        return hit
    op = e.op
    if op == "const":
        r = e.val
    elif op == "var":
        r = float(env[e.val])
    elif op == "add":
        r = 0.0
        for a in e.args:
            r += _eval(a, env, cache)
    elif op == "mul":
        r = 1.0
        for a in e.args:
            r *= _eval(a, env, cache)
    elif op == "neg":
        r = -_eval(e.args[0], env, cache)
    elif op == "div":
        den = _eval(e.args[1], env, cache)
        if den == 0.0:
            raise DomainError("division by zero", e)
        r = _eval(e.args[0], env, cache) / den
    elif op == "pow":
        base = _eval(e.args[0], env, cache)
        try:
            r = _pow_value(base, e.val)
        except ZeroDivisionError:
            raise DomainError("zero raised to a negative power", e) from None
        except ValueError:
            raise DomainError("even root of a negative number", e) from None
        except OverflowError:
            raise DomainError("overflow", e) from None
    elif op == "fn":
        x = _eval(e.args[0], env, cache)
        try:
            r = _FN_IMPL[e.val](x)
        except ValueError:
            raise DomainError(f"{e.val} of {x!r}", e) from None
        except OverflowError:
            raise DomainError("overflow", e) from None
    elif op == "bump":
        lo, hi, n = e.val
        r = bump_derivative(_eval(e.args[0], env, cache), lo, hi, n)
    else:  # pragma: no cover
        raise ExprError(f"unknown node {op!r}")
    if r != r or r in (math.inf, -math.inf):
        raise DomainError("non-finite result", e)
    cache[e] = r
    return r


# --------------------------------------------------------------------------
# differentiation


def diff(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``v``."""
    return _diff(e, v, {})


def _diff(e: Expr, v: str, memo: dict) -> Expr:
    if v not in e.free_vars:
        return ZERO
    hit = memo.get(e)
    if hit is not None:
        return hit
    op = e.op
    if op == "var":
        r = ONE
    elif op == "add":
        r = add(*(_diff(a, v, memo) for a in e.args))
    elif op == "mul":
        terms = []
        for i, a in enumerate(e.args):
            da = _diff(a, v, memo)
            if da.is_zero():
                continue
            terms.append(mul(*e.args[:i], da, *e.args[i + 1 :]))
        r = add(*terms)
    elif op == "neg":
        r = neg(_diff(e.args[0], v, memo))
    elif op == "div":
        num, den = e.args
        dn, dd = _diff(num, v, memo), _diff(den, v, memo)
        if dd.is_zero():
            r = div(dn, den)
        else:
            r = div(sub(mul(dn, den), mul(num, dd)), power(den, 2))
    elif op == "pow":
        (base,) = e.args
        q = e.val
        r = mul(const(float(q)), power(base, q - 1), _diff(base, v, memo))
    elif op == "fn":
        (a,) = e.args
        da = _diff(a, v, memo)
        name = e.val
        if name == "sin":
            outer = func("cos", a)
        elif name == "cos":
            outer = neg(func("sin", a))
        elif name == "exp":
            outer = e
        elif name == "log":
            return _memo(memo, e, div(da, a))
        else:  # tanh
            outer = sub(ONE, power(e, 2))
        r = mul(outer, da)
    elif op == "bump":
        (a,) = e.args
        lo, hi, n = e.val
        r = mul(bump(a, lo, hi, n + 1), _diff(a, v, memo))
    else:  # pragma: no cover
        raise ExprError(f"cannot differentiate node {op!r}")
    memo[e] = r
    return r


def _memo(memo, key, val):
    memo[key] = val
    return val


# --------------------------------------------------------------------------
# substitution


def subs(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions, refolding on the way up."""
    m = {k: _lift(v) for k, v in mapping.items()}
    memo: dict[Expr, Expr] = {}

    def go(x: Expr) -> Expr:
        if not (x.free_vars & m.keys()):
            return x
        hit = memo.get(x)
        if hit is not None:
            return hit
        if x.op == "var":
            r = m[x.val]
        else:
            r = _rebuild(x, tuple(go(a) for a in x.args))
        memo[x] = r
        return r

    return go(e)


def _rebuild(e: Expr, args: tuple[Expr, ...]) -> Expr:
    op = e.op
    if op == "add":
        return add(*args)
    if op == "mul":
        return mul(*args)
    if op == "neg":
        return neg(args[0])
    if op == "div":
        return div(*args)
    if op == "pow":
        return power(args[0], e.val)
    if op == "fn":
        return func(e.val, args[0])
    if op == "bump":
        lo, hi, n = e.val
        return bump(args[0], lo, hi, n)
    return e


# --------------------------------------------------------------------------
# simplification


def simplify(e: Expr) -> Expr:
    """Conservative simplification.

    Folds constants, drops 0 and 1 where neutral, flattens nested sums and
    products, collects numerically weighted like terms (``x + x -> 2*x``) and
    repeated factors (``x*x -> x^2``), and distributes constant factors over
    sums.  No factoring or expansion of products of sums.
    """
    memo: dict[Expr, Expr] = {}

    def go(x: Expr) -> Expr:
        if not x.args:
            return x
        hit = memo.get(x)
        if hit is not None:
            return hit
        args = tuple(go(a) for a in x.args)
        if x.op == "add":
            r = _collect_sum(args)
        elif x.op == "mul":
            r = _collect_product(args)
        elif x.op == "neg":
            r = _collect_sum((mul(const(-1.0), args[0]),))
        else:
            r = _rebuild(x, args)
        memo[x] = r
        return r

    return go(e)


def _split_coeff(t: Expr) -> tuple[float, Expr]:
    if t.op == "const":
        return t.val, ONE
    if t.op == "neg":
        c, rest = _split_coeff(t.args[0])
        return -c, rest
    if t.op == "mul" and t.args[0].op == "const":
        rest = t.args[1:]
        return t.args[0].val, rest[0] if len(rest) == 1 else Expr("mul", rest)
    return 1.0, t


_OP_RANK = {"var": 0, "pow": 1, "fn": 2, "bump": 3, "div": 4, "add": 5, "mul": 6, "neg": 7, "const": 8}


def _sort_key(e: Expr) -> tuple:
    base = e.args[0] if e.op == "pow" else e
    return (_OP_RANK.get(base.op, 9), to_string(base), to_string(e))


def _collect_sum(terms: Iterable[Expr]) -> Expr:
    coeffs: dict[Expr, float] = {}
    order: list[Expr] = []

    def push(t: Expr, scale: float):
        c, rest = _split_coeff(t)
        c *= scale
        if rest.op == "add":
            for u in rest.args:
                push(u, c)
            return
        if rest not in coeffs:
            coeffs[rest] = 0.0
            order.append(rest)
        coeffs[rest] += c

    for t in terms:
        push(t, 1.0)
    out = []
    const_part = 0.0
    for rest in order:
        c = coeffs[rest]
        if c == 0.0:
            continue
        if rest.is_one():
            const_part += c
        else:
            out.append(mul(const(c), rest))
    if const_part != 0.0:
        out.append(const(const_part))
    return add(*out)


def _collect_product(factors: Iterable[Expr]) -> Expr:
    c = 1.0
    exps: dict[Expr, int] = {}
    order: list[Expr] = []

    def push(f: Expr):
        nonlocal c
        if f.op == "const":
            c *= f.val
        elif f.op == "neg":
            c = -c
            push(f.args[0])
        elif f.op == "mul":
            for g in f.args:
                push(g)
        else:
            # only integer powers merge; fractional ones keep their own domain
            if f.op == "pow" and f.val.denominator == 1:
                base, q = f.args[0], f.val.numerator
            else:
                base, q = f, 1
            if base not in exps:
                exps[base] = 0
                order.append(base)
            exps[base] += q

    for f in factors:
        push(f)
    if c == 0.0:
        return ZERO
    parts = sorted((power(b, exps[b]) for b in order if exps[b] != 0), key=_sort_key)
    if len(parts) == 1 and parts[0].op == "add":
        return _collect_sum((mul(const(c), parts[0]),))
    return mul(const(c), *parts)


# --------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_num(c: float) -> str:
    if c == int(c) and abs(c) < 1e16:
        return str(int(c))
    return repr(c)


def _fmt_frac(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator) if q.numerator >= 0 else f"({q.numerator})"
    return f"({q.numerator}/{q.denominator})"


def to_string(e: Expr) -> str:
    """Canonical text form; ``parse_expr(to_string(e))`` rebuilds ``e``."""
    op = e.op
    if op == "const":
        return _fmt_num(e.val)
    if op == "var":
        return e.val
    if op == "add":
        out = [_child(e.args[0], e, first=True)]
        for a in e.args[1:]:
            if a.op == "neg" and a.args[0].op != "const":
                inner = a.args[0]
                s = to_string(inner)
                out.append(f" - ({s})" if inner.op in ("add", "neg") else f" - {s}")
            elif a.op == "const" and a.val < 0:
                out.append(" - " + _fmt_num(-a.val))
            else:
                out.append(" + " + _child(a, e, first=False))
        return "".join(out)
    if op == "mul":
        return "*".join(_child(a, e, first=i == 0) for i, a in enumerate(e.args))
    if op == "div":
        num, den = e.args
        return f"{_child(num, e, first=True)}/{_child(den, e, first=False, strict=True)}"
    if op == "neg":
        inner = e.args[0]
        s = to_string(inner)
        if inner.op in ("add", "mul", "div", "neg") or (inner.op == "const"):
            return f"-({s})"
        return f"-{s}"
    if op == "pow":
        return f"{_child(e.args[0], e, first=True, strict=True)}^{_fmt_frac(e.val)}"
    if op == "fn":
        return f"{e.val}({to_string(e.args[0])})"
    if op == "bump":
        lo, hi, n = e.val
        tail = f"; {n}" if n else ""
        return f"bump({to_string(e.args[0])}; {_fmt_num(lo)}, {_fmt_num(hi)}{tail})"
    raise ExprError(f"unknown node {op!r}")  # pragma: no cover


def _child(a: Expr, parent: Expr, first: bool, strict: bool = False) -> str:
    s = to_string(a)
    po = parent.op
    if a.op == "const" and a.val < 0:
        return s if (first and po in ("add", "mul", "div")) else f"({s})"
    if a.op in ("const", "var", "fn", "bump"):
        return s
    if po == "add":
        return f"({s})" if a.op == "add" or (a.op == "neg" and not first) else s
    if po == "mul":
        if a.op in ("add", "mul", "neg") or (a.op == "div" and not first):
            return f"({s})"
        return s
    if po == "div":
        if a.op in ("add", "neg") or (strict and a.op in ("mul", "div")):
            return f"({s})"
        return s
    if po == "pow":
        return f"({s})"
    return s


# --------------------------------------------------------------------------
# parsing


class _ExprParser:
    def __init__(self, toks: Sequence[Token], allowed: frozenset[str] | None):
        self.toks = toks
        self.i = 0
        self.allowed = allowed

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.tok
        if t.kind != "op" or t.text != text:
            found = t.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", *t.pos)
        return self.advance()

    def at(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.at("+") or self.at("-"):
            minus = self.advance().text == "-"
            t = self.term()
            terms.append(_neg_raw(t) if minus else t)
        return terms[0] if len(terms) == 1 else Expr("add", tuple(terms))

    def term(self) -> Expr:
        left = self.factor()
        factors = [left]
        while self.at("*") or self.at("/"):
            opt = self.advance().text
            right = self.factor()
            if opt == "*":
                factors.append(right)
            else:
                num = factors[0] if len(factors) == 1 else Expr("mul", tuple(factors))
                factors = [Expr("div", (num, right))]
        return factors[0] if len(factors) == 1 else Expr("mul", tuple(factors))

    def factor(self) -> Expr:
        if self.at("-"):
            self.advance()
            return _neg_raw(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            t = self.advance()
            ex = self.factor()
            q = _as_rational(ex)
            if q is None:
                raise ParseError("exponent must be a rational constant", *t.pos)
            return Expr("pow", (base,), q)
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return const(float(t.text))
        if t.kind == "name":
            self.advance()
            name = t.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Expr("fn", (arg,), name)
            if name == "bump":
                return self.bump_args(t)
            if self.allowed is not None and name not in self.allowed:
                raise UnboundVariableError(name, *t.pos)
            return var(name)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = t.text or "end of input"
        raise ParseError(f"unexpected {found!r}", *t.pos)

    def bump_args(self, head: Token) -> Expr:
        self.expect("(")
        arg = self.expr()
        self.expect(";")
        lo_tok = self.tok
        lo = self._const_value(self.expr(), lo_tok)
        self.expect(",")
        hi_tok = self.tok
        hi = self._const_value(self.expr(), hi_tok)
        order = 0
        if self.at(";"):
            self.advance()
            o_tok = self.tok
            ov = self._const_value(self.expr(), o_tok)
            if ov != int(ov) or not 0 <= ov <= _BUMP_MAX_ORDER:
                raise ParseError("bump derivative order must be a small non-negative integer", *o_tok.pos)
            order = int(ov)
        self.expect(")")
        if not hi > lo:
            raise ParseError("bump requires a < b", *head.pos)
        return Expr("bump", (arg,), (lo, hi, order))

    def _const_value(self, e: Expr, tok: Token) -> float:
        if e.free_vars:
            raise ParseError("bump parameters must be constants", *tok.pos)
        try:
            return evaluate(e, {})
        except DomainError as exc:
            raise ParseError(str(exc), *tok.pos) from None


def _neg_raw(e: Expr) -> Expr:
    if e.op == "const":
        return const(-e.val)
    return Expr("neg", (e,))


def _as_rational(e: Expr) -> Fraction | None:
    if e.op == "const":
        return Fraction(repr(e.val)).limit_denominator(10**6) if e.val != int(e.val) else Fraction(int(e.val))
    if e.op == "div":
        a, b = (_as_rational(x) for x in e.args)
        if a is None or b is None or b == 0:
            return None
        return a / b
    if e.op == "neg":
        a = _as_rational(e.args[0])
        return None if a is None else -a
    return None


def parse_expr(text: str, allowed_vars: Iterable[str] | None = None) -> Expr:
    """Parse expression text over ``allowed_vars`` (``None`` allows any name)."""
    allowed = None if allowed_vars is None else frozenset(allowed_vars)
    toks = tokenize(text)
    p = _ExprParser(toks, allowed)
    e = p.expr()
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p.tok.text!r}", *p.tok.pos)
    return e


def parse_tokens(toks: Sequence[Token], start: int, allowed: Iterable[str] | None) -> tuple[Expr, int]:
    """Parse one expression from a token list; returns the tree and next index."""
    p = _ExprParser(toks, None if allowed is None else frozenset(allowed))
    p.i = start
    e = p.expr()
    return e, p.i


# --------------------------------------------------------------------------
# testing helpers


def random_env(names: Iterable[str], rng: random.Random, lo: float = -1.5, hi: float = 1.5) -> dict[str, float]:
    return {n: rng.uniform(lo, hi) for n in sorted(names)}
