"""Scene files: a small block language declaring a chart, bundle, foliation,
connection, sections and leafwise paths.

Grammar (``#`` starts a comment)::

    scene      := item*
    item       := chart | bundle | foliation | connection | section | path
    chart      := "chart" "{" "dim" INT ";" "names" NAMES ";" "box" RANGES ";"? "}"
    bundle     := "bundle" "{" "fibre" INT ";" "names" NAMES ";" "box" RANGES ";"? "}"
    foliation  := "foliation" "{" ("gen" NAME "=" EXPRS ";")+ "}"
    connection := "connection" "{" ("trivial" ";" | ("lift" NAME "=" EXPRS "|" EXPRS ";")+) "}"
    section    := "section" NAME "=" EXPRS ";"
    path       := "path" NAME "{" pathstmt* "}"
                | "path" NAME "=" ("compose" "(" NAME "," NAME ")" | "inverse" "(" NAME ")") ";"
    pathstmt   := "start" CONSTS ";" | "duration" CONST ";" | "margin" CONST ";"
                | "coeff" NAME "=" EXPR ";" | "exposure" NAME "=" CONST ";"
    RANGES     := CONST ".." CONST ("," CONST ".." CONST)*

``compose(a, b)`` runs ``b`` first.  ``exposure X = v`` rescales the
coefficient of ``X`` (1 when absent) so that ``integral w(t) c(t) dt = v``;
such a coefficient may depend on ``t`` only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from scipy.integrate import quad

from .connection import (
    Connection,
    validate_bracket_preserving,
    validate_right_inverse,
)
from .flow import LeafwisePath, concatenate, exposure as window_exposure, invert, make_path, window
from .geometry import TIME, BaseField, Bundle, Chart, Foliation, ProjField, involutivity_check
from .lexer import ParseError, Token, tokenize
from .symexpr import RESERVED, ONE, Expr, UnboundVariableError, const, evaluate, mul, parse_tokens, to_string

__all__ = ["Scene", "PathSpec", "SceneError", "parse_scene", "print_scene", "load_scene"]

KEYWORDS = {
    "chart", "bundle", "foliation", "connection", "section", "path", "gen", "lift", "trivial",
    "dim", "fibre", "names", "box", "start", "duration", "margin", "coeff", "exposure",
    "compose", "inverse",
}


class SceneError(ParseError):
    pass


@dataclass(frozen=True)
class PathSpec:
    """Declaration of a named path.

    ``kind`` is ``"leaf"`` for an explicit path and ``"compose"`` or
    ``"inverse"`` for derived ones, which reference other paths by name.
    """

    name: str
    kind: str
    start: tuple[float, ...] = ()
    duration: float = 1.0
    margin: float | None = None
    coeffs: tuple[tuple[str, Expr], ...] = ()
    exposures: tuple[tuple[str, float], ...] = ()
    refs: tuple[str, ...] = ()

    def effective_coeffs(self) -> dict[str, Expr]:
        """Coefficients after exposure rescaling."""
        out = dict(self.coeffs)
        eps = self.duration / 10 if self.margin is None else self.margin
        for g, target in self.exposures:
            c = out.get(g, ONE)
            base = _exposure_of(c, self.duration, eps)
            if base == 0.0:
                raise ValueError(f"path {self.name}: coefficient of {g} has zero exposure")
            out[g] = mul(const(target / base), c) if c != ONE else const(target / base)
        return out


def _exposure_of(c: Expr, d: float, eps: float) -> float:
    if c.op == "const":
        return c.val * window_exposure(d, eps)
    w = window(d, eps)
    f = lambda s: evaluate(w, {TIME: s}) * evaluate(c, {TIME: s})
    pts = [eps / 2, eps, d - eps, d - eps / 2]
    val, _ = quad(f, 0.0, d, points=pts, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@dataclass
class Scene:
    chart: Chart
    bundle: Bundle
    foliation: Foliation
    connection: Connection
    sections: dict[str, tuple[Expr, ...]] = field(default_factory=dict)
    paths: dict[str, PathSpec] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    tol: float = 1e-9
    _built: dict = field(default_factory=dict, repr=False, compare=False)

    def structure(self) -> tuple:
        """Everything that defines the scene, for structural comparison."""
        return (
            self.chart,
            self.bundle,
            self.foliation,
            self.connection.lifts,
            tuple(sorted(self.sections.items())),
            tuple(self.paths.values()),
        )

    def section(self, name: str) -> tuple[Expr, ...]:
        try:
            return self.sections[name]
        except KeyError:
            raise KeyError(f"unknown section {name!r}") from None

    def path(self, name: str) -> LeafwisePath:
        if name in self._built:
            return self._built[name]
        try:
            spec = self.paths[name]
        except KeyError:
            raise KeyError(f"unknown path {name!r}") from None
        if spec.kind == "leaf":
            p = make_path(
                self.foliation, spec.start, spec.duration, spec.margin, spec.effective_coeffs(), tol=self.tol
            )
        elif spec.kind == "compose":
            p = concatenate(self.path(spec.refs[0]), self.path(spec.refs[1]))
        else:
            p = invert(self.path(spec.refs[0]))
        self._built[name] = p
        return p


# --------------------------------------------------------------------------
# parser


class _SceneParser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.chart: Chart | None = None
        self.bundle: Bundle | None = None
        self.fol: Foliation | None = None
        self.lifts: dict[str, tuple[Token, tuple[Expr, ...], tuple[Expr, ...]]] | None = None
        self.trivial = False
        self.conn_tok: Token | None = None
        self.sections: dict[str, tuple[Expr, ...]] = {}
        self.paths: dict[str, PathSpec] = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None) -> SceneError:
        tok = tok or self.tok
        return SceneError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "name") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def name(self, what: str = "name") -> Token:
        t = self.tok
        if t.kind != "name":
            raise self.error(f"expected {what}, found {t.text or 'end of input'!r}")
        return self.advance()

    def new_name(self, what: str) -> Token:
        t = self.name(what)
        if t.text in KEYWORDS or t.text in RESERVED or t.text == TIME:
            raise self.error(f"{t.text!r} is reserved and cannot name a {what}", t)
        return t

    def end_stmt(self) -> None:
        if self.at(";"):
            self.advance()
        elif not self.at("}"):
            raise self.error(f"expected ';', found {self.tok.text or 'end of input'!r}")

    def expr(self, allowed) -> Expr:
        try:
            e, self.i = parse_tokens(self.toks, self.i, allowed)
        except UnboundVariableError as exc:
            raise SceneError(f"unknown identifier {exc.name!r}", exc.line, exc.col) from None
        except SceneError:
            raise
        except ParseError as exc:
            raise SceneError(exc.msg, exc.line, exc.col) from None
        return e

    def exprs(self, allowed) -> tuple[Expr, ...]:
        out = [self.expr(allowed)]
        while self.at(","):
            self.advance()
            out.append(self.expr(allowed))
        return tuple(out)

    def constant(self) -> float:
        t = self.tok
        e = self.expr(set())
        try:
            return evaluate(e, {})
        except ArithmeticError as exc:
            raise self.error(str(exc), t) from None

    def constants(self) -> tuple[float, ...]:
        out = [self.constant()]
        while self.at(","):
            self.advance()
            out.append(self.constant())
        return tuple(out)

    def int_value(self) -> int:
        t = self.tok
        v = self.constant()
        if v != int(v) or v < 1:
            raise self.error("expected a positive integer", t)
        return int(v)

    def names(self) -> tuple[str, ...]:
        out = [self.new_name("coordinate").text]
        while self.at(","):
            self.advance()
            out.append(self.new_name("coordinate").text)
        return tuple(out)

    def ranges(self) -> tuple[tuple[float, float], ...]:
        out = []
        while True:
            lo = self.constant()
            self.expect("..")
            hi = self.constant()
            out.append((lo, hi))
            if not self.at(","):
                return tuple(out)
            self.advance()

    # blocks
    def parse(self) -> None:
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind != "name":
                raise self.error(f"expected a declaration, found {t.text!r}")
            handler = {
                "chart": self.chart_block,
                "bundle": self.bundle_block,
                "foliation": self.foliation_block,
                "connection": self.connection_block,
                "section": self.section_stmt,
                "path": self.path_stmt,
            }.get(t.text)
            if handler is None:
                raise self.error(f"unknown declaration {t.text!r}")
            handler()

    def dims_block(self, head: str, count_kw: str):
        head_tok = self.expect(head)
        self.expect("{")
        n = names = box = None
        while not self.at("}"):
            kw = self.name("keyword")
            if kw.text == count_kw:
                n = (self.int_value(), kw)
            elif kw.text == "names":
                names = (self.names(), kw)
            elif kw.text == "box":
                box = (self.ranges(), kw)
            else:
                raise self.error(f"unknown {head} setting {kw.text!r}", kw)
            self.end_stmt()
        self.expect("}")
        if names is None:
            raise self.error(f"{head} block needs 'names'", head_tok)
        if n is not None and n[0] != len(names[0]):
            raise self.error(f"{count_kw} {n[0]} does not match {len(names[0])} names", n[1])
        if box is None:
            raise self.error(f"{head} block needs 'box'", head_tok)
        if len(box[0]) != len(names[0]):
            raise self.error("box needs one range per coordinate", box[1])
        for lo, hi in box[0]:
            if not lo < hi:
                raise self.error(f"empty range {lo}..{hi}", box[1])
        return names[0], box[0], head_tok

    def chart_block(self) -> None:
        if self.chart is not None:
            raise self.error("duplicate chart block")
        names, box, _ = self.dims_block("chart", "dim")
        self.chart = Chart(names, box)

    def bundle_block(self) -> None:
        if self.bundle is not None:
            raise self.error("duplicate bundle block")
        if self.chart is None:
            raise self.error("bundle declared before chart")
        names, box, tok = self.dims_block("bundle", "fibre")
        clash = set(names) & set(self.chart.names)
        if clash:
            raise self.error(f"fibre name {sorted(clash)[0]!r} clashes with a base coordinate", tok)
        try:
            self.bundle = Bundle(self.chart, names, box)
        except ValueError as exc:
            raise self.error(str(exc), tok) from None

    def foliation_block(self) -> None:
        head = self.expect("foliation")
        if self.chart is None:
            raise self.error("foliation declared before chart", head)
        if self.fol is not None:
            raise self.error("duplicate foliation block", head)
        self.expect("{")
        gens, names = [], []
        while not self.at("}"):
            self.expect("gen")
            nt = self.new_name("generator")
            if nt.text in names:
                raise self.error(f"duplicate generator {nt.text!r}", nt)
            self.expect("=")
            et = self.tok
            comps = self.exprs(self.chart.names)
            if len(comps) != self.chart.n_base:
                raise self.error(f"generator {nt.text} needs {self.chart.n_base} components", et)
            gens.append(BaseField(self.chart.names, comps))
            names.append(nt.text)
            self.end_stmt()
        self.expect("}")
        if not gens:
            raise self.error("foliation needs at least one generator", head)
        self.fol = Foliation(self.chart, tuple(gens), tuple(names))

    def connection_block(self) -> None:
        head = self.expect("connection")
        if self.fol is None or self.bundle is None:
            raise self.error("connection declared before foliation and bundle", head)
        if self.conn_tok is not None:
            raise self.error("duplicate connection block", head)
        self.conn_tok = head
        self.expect("{")
        lifts: dict = {}
        while not self.at("}"):
            if self.at("trivial"):
                self.advance()
                self.trivial = True
                self.end_stmt()
                continue
            self.expect("lift")
            nt = self.name("generator")
            if nt.text not in self.fol.names:
                raise self.error(f"unknown generator {nt.text!r}", nt)
            if nt.text in lifts:
                raise self.error(f"duplicate lift for {nt.text!r}", nt)
            self.expect("=")
            at = self.tok
            a = self.exprs(self.chart.names)
            if len(a) != self.chart.n_base:
                raise self.error(f"lift of {nt.text} needs {self.chart.n_base} base components", at)
            self.expect("|")
            bt = self.tok
            b = self.exprs(self.bundle.names)
            if len(b) != self.bundle.n_fibre:
                raise self.error(f"lift of {nt.text} needs {self.bundle.n_fibre} fibre components", bt)
            lifts[nt.text] = (nt, a, b)
            self.end_stmt()
        self.expect("}")
        if self.trivial and lifts:
            raise self.error("a connection is either trivial or given by lifts", head)
        if not self.trivial:
            missing = [n for n in self.fol.names if n not in lifts]
            if missing:
                raise self.error(f"no lift given for generator {missing[0]!r}", head)
        self.lifts = lifts

    def section_stmt(self) -> None:
        self.expect("section")
        if self.bundle is None:
            raise self.error("section declared before bundle")
        nt = self.new_name("section")
        if nt.text in self.sections:
            raise self.error(f"duplicate section {nt.text!r}", nt)
        self.expect("=")
        et = self.tok
        comps = self.exprs(self.chart.names)
        if len(comps) != self.bundle.n_fibre:
            raise self.error(f"section needs {self.bundle.n_fibre} components", et)
        self.sections[nt.text] = comps
        self.end_stmt()

    def path_stmt(self) -> None:
        self.expect("path")
        if self.fol is None:
            raise self.error("path declared before foliation")
        nt = self.new_name("path")
        if nt.text in self.paths:
            raise self.error(f"duplicate path {nt.text!r}", nt)
        if self.at("="):
            self.advance()
            op = self.name("'compose' or 'inverse'")
            if op.text not in ("compose", "inverse"):
                raise self.error(f"expected 'compose' or 'inverse', found {op.text!r}", op)
            self.expect("(")
            refs = [self.path_ref()]
            if op.text == "compose":
                self.expect(",")
                refs.append(self.path_ref())
            self.expect(")")
            self.end_stmt()
            self.paths[nt.text] = PathSpec(nt.text, op.text, refs=tuple(refs))
            return
        self.expect("{")
        start = None
        duration, margin = 1.0, None
        coeffs: dict[str, Expr] = {}
        exps: dict[str, float] = {}
        allowed = set(self.chart.names) | {TIME}
        while not self.at("}"):
            kw = self.name("path setting")
            if kw.text == "start":
                st = self.tok
                start = self.constants()
                if len(start) != self.chart.n_base:
                    raise self.error(f"start needs {self.chart.n_base} coordinates", st)
                if not self.chart.contains(start):
                    raise self.error(f"start {start} lies outside the chart box", st)
            elif kw.text == "duration":
                st = self.tok
                duration = self.constant()
                if not duration > 0:
                    raise self.error("duration must be positive", st)
            elif kw.text == "margin":
                margin_tok = self.tok
                margin = self.constant()
            elif kw.text in ("coeff", "exposure"):
                g = self.name("generator")
                if g.text not in self.fol.names:
                    raise self.error(f"unknown generator {g.text!r}", g)
                self.expect("=")
                if kw.text == "coeff":
                    coeffs[g.text] = self.expr(allowed)
                else:
                    exps[g.text] = self.constant()
            else:
                raise self.error(f"unknown path setting {kw.text!r}", kw)
            self.end_stmt()
        self.expect("}")
        if start is None:
            raise self.error(f"path {nt.text} needs a start point", nt)
        eps = duration / 10 if margin is None else margin
        if not 0 < eps < duration / 4:
            raise self.error("margin must lie in (0, duration/4)", margin_tok if margin is not None else nt)
        for g in exps:
            c = coeffs.get(g)
            if c is not None and c.free_vars - {TIME}:
                raise self.error(f"exposure of {g} needs a coefficient depending on t only", nt)
        order = {n: i for i, n in enumerate(self.fol.names)}
        spec = PathSpec(
            nt.text,
            "leaf",
            tuple(start),
            float(duration),
            margin,
            tuple(sorted(coeffs.items(), key=lambda kv: order[kv[0]])),
            tuple(sorted(exps.items(), key=lambda kv: order[kv[0]])),
        )
        try:
            spec.effective_coeffs()
        except ValueError as exc:
            raise self.error(str(exc), nt) from None
        self.paths[nt.text] = spec

    def path_ref(self) -> str:
        t = self.name("path name")
        if t.text not in self.paths:
            raise self.error(f"unknown path {t.text!r}", t)
        return t.text

    def finish(self) -> tuple:
        end = self.tok
        if self.chart is None:
            raise self.error("scene has no chart block", end)
        if self.bundle is None:
            raise self.error("scene has no bundle block", end)
        if self.fol is None:
            raise self.error("scene has no foliation block", end)
        if self.lifts:
            lifts = tuple(
                ProjField(self.bundle, self.lifts[n][1], self.lifts[n][2]) for n in self.fol.names
            )
            conn = Connection(self.bundle, self.fol, lifts)
        else:
            conn = Connection.trivial(self.bundle, self.fol)
        return self.chart, self.bundle, self.fol, conn


def parse_scene(text: str, strict: bool = False, validate: bool = True, tol: float = 1e-9) -> Scene:
    """Parse and validate a scene.

    Validator failures (involutivity, right inverse, bracket preservation)
    become warnings, or a :class:`SceneError` when ``strict``.
    """
    p = _SceneParser(text)
    p.parse()
    chart, bundle, fol, conn = p.finish()
    scene = Scene(chart, bundle, fol, conn, dict(p.sections), dict(p.paths), tol=tol)
    if validate:
        warnings = validation_warnings(scene)
        if warnings and strict:
            raise SceneError("validation failed: " + "; ".join(warnings))
        scene.warnings = warnings
    return scene


def validation_warnings(scene: Scene) -> list[str]:
    out = []
    inv = involutivity_check(scene.foliation)
    if not inv.passed:
        out.append(f"foliation generators fail the involutivity check (worst residual {inv.worst_residual:.3g})")
    ri = validate_right_inverse(scene.connection)
    if not ri.passed:
        out.append(f"lifts are not a right inverse of the pushforward (max residual {ri.max_residual:.3g})")
    br = validate_bracket_preserving(scene.connection)
    if not br.passed:
        out.append(f"connection does not preserve brackets (max residual {br.max_residual:.3g})")
    return out


# --------------------------------------------------------------------------
# printer


def _num(v: float) -> str:
    return repr(float(v))


def _exprs(es: Sequence[Expr]) -> str:
    return ", ".join(to_string(e) for e in es)


def print_scene(scene: Scene) -> str:
    """Canonical scene text; parsing it back gives a structurally equal scene."""
    ch, B, F = scene.chart, scene.bundle, scene.foliation
    lines = [
        "chart { dim %d; names %s; box %s }"
        % (ch.n_base, ",".join(ch.names), ", ".join(f"{_num(a)}..{_num(b)}" for a, b in ch.box)),
        "bundle { fibre %d; names %s; box %s }"
        % (B.n_fibre, ",".join(B.fibre_names), ", ".join(f"{_num(a)}..{_num(b)}" for a, b in B.fibre_box)),
        "foliation {",
    ]
    for n, g in zip(F.names, F.generators):
        lines.append(f"  gen {n} = {_exprs(g.components)};")
    lines.append("}")
    if scene.connection.is_trivial:
        lines.append("connection { trivial; }")
    else:
        lines.append("connection {")
        for n, L in zip(F.names, scene.connection.lifts):
            lines.append(f"  lift {n} = {_exprs(L.a)} | {_exprs(L.b)};")
        lines.append("}")
    for n, comps in scene.sections.items():
        lines.append(f"section {n} = {_exprs(comps)};")
    for spec in scene.paths.values():
        if spec.kind == "compose":
            lines.append(f"path {spec.name} = compose({spec.refs[0]}, {spec.refs[1]});")
        elif spec.kind == "inverse":
            lines.append(f"path {spec.name} = inverse({spec.refs[0]});")
        else:
            body = [f"start {', '.join(_num(v) for v in spec.start)};", f"duration {_num(spec.duration)};"]
            if spec.margin is not None:
                body.append(f"margin {_num(spec.margin)};")
            body += [f"coeff {g} = {to_string(e)};" for g, e in spec.coeffs]
            body += [f"exposure {g} = {_num(v)};" for g, v in spec.exposures]
            lines.append(f"path {spec.name} {{ " + " ".join(body) + " }")
    return "\n".join(lines) + "\n"


def load_scene(name_or_path: str, strict: bool = False, validate: bool = True, tol: float = 1e-9) -> Scene:
    """Load a scene file, or a shipped scene by bare name (e.g. ``"circles"``)."""
    import os
    from importlib import resources

    if os.path.exists(name_or_path):
        with open(name_or_path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        ref = resources.files("holojet").joinpath("scenes").joinpath(f"{name_or_path}.scene")
        if not ref.is_file():
            raise FileNotFoundError(f"no scene file or shipped scene named {name_or_path!r}")
        text = ref.read_text(encoding="utf-8")
    return parse_scene(text, strict=strict, validate=validate, tol=tol)
