"""Source language: lexer, parser, scope resolution and definition classes.

The concrete syntax is a layout-free Haskell-like language: top-level
declarations are separated by ``;``, ``let`` blocks use mandatory braces,
and a signature directly combines with the binding of the same name into
an annotated definition.  Lambda binders receive fresh type variables at
parse time; the order of all of them over the whole program is recorded
so later stages can thread it through every generated rule.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from .core import (
    BOOL,
    CHAR,
    INT,
    LIST_CON,
    PAIR,
    STRING,
    TApp,
    TCon,
    TVar,
    Type,
    UserC,
    arrow,
    as_arrow,
    as_binary,
    pair,
    spine,
)

PRIMITIVE_NAMES = ("+", "&&", "const", "(,)")

KEYWORDS = {"class", "instance", "let", "in", "where"}
BINOPS = {"+", "-", "*", "&&", "||", "==", "/=", "<", "<=", ">", ">="}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}")


class UnboundVariable(Exception):
    def __init__(self, name: str, line: int, col: int):
        self.name = name
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: unbound variable `{name}`")


class UnsupportedRecursion(Exception):
    def __init__(self, names: list[str], line: int, col: int):
        self.names = names
        self.line = line
        self.col = col
        super().__init__(
            f"{line}:{col}: mutually recursive group {{{', '.join(names)}}} "
            "has no annotated member; annotate at least one of them"
        )


# ---------------------------------------------------------------------------
# AST


@dataclass
class Expr:
    nid: int = field(init=False, default=-1)
    line: int = field(init=False, default=0)
    col: int = field(init=False, default=0)


@dataclass
class EVar(Expr):
    name: str


@dataclass
class ELit(Expr):
    text: str
    ty: Type


@dataclass
class EAbs(Expr):
    param: str
    body: Expr
    param_tv: str = ""  # fresh type variable, filled by the binder pass


@dataclass
class EApp(Expr):
    fn: Expr
    arg: Expr


@dataclass
class QualAnn:
    """A closed qualified type from an annotation: context => type."""

    context: tuple[UserC, ...]
    type: Type
    line: int = 0
    col: int = 0


@dataclass
class ELet(Expr):
    name: str
    rhs: Expr
    body: Expr


@dataclass
class ELetA(Expr):
    name: str
    ann: QualAnn
    rhs: Expr
    body: Expr


@dataclass
class ClassDecl:
    name: str
    params: tuple[str, ...]
    supers: tuple[UserC, ...]
    fundeps: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    methods: tuple[tuple[str, QualAnn], ...]
    nid: int = -1
    line: int = 0
    col: int = 0


@dataclass
class InstanceDecl:
    context: tuple[UserC, ...]
    classname: str
    types: tuple[Type, ...]
    nid: int = -1
    line: int = 0
    col: int = 0


@dataclass
class TopDef:
    name: str
    ann: Optional[QualAnn]
    rhs: Expr
    nid: int = -1
    line: int = 0
    col: int = 0


@dataclass
class Program:
    classes: list[ClassDecl]
    instances: list[InstanceDecl]
    defs: list[TopDef]
    lt_order: list[str] = field(default_factory=list)
    locs: dict[int, tuple[int, int]] = field(default_factory=dict)
    source_name: str = "<input>"

    def method_names(self) -> list[str]:
        return [m for c in self.classes for m, _ in c.methods]

    def loc_str(self, nid: int) -> str:
        if nid in self.locs:
            line, col = self.locs[nid]
            return f"{line}:{col}"
        return "?"


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<nl>\n)
    | (?P<comment>--[^\n]*)
    | (?P<int>\d+)
    | (?P<char>'(\\.|[^'\\])')
    | (?P<string>"(\\.|[^"\\])*")
    | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
    | (?P<sym>::|->|=>|<=|>=|==|/=|&&|\|\||[()\[\]{};,=\\|+\-*<>.])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup or ""
        text = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(text)
        else:
            if kind == "id":
                if text in KEYWORDS:
                    kind = text
                elif text[0].isupper():
                    kind = "conid"
                else:
                    kind = "varid"
            elif kind == "sym" and text in ("::", "->", "=>"):
                kind = text
            tokens.append(Token(kind, text, line, col))
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.next_nid = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text!r}", t.line, t.col)
        return self.advance()

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def node(self, e: Expr, tok: Token) -> Expr:
        e.nid = self.next_nid
        self.next_nid += 1
        e.line, e.col = tok.line, tok.col
        return e

    # -- types ---------------------------------------------------------

    def parse_qualtype(self) -> QualAnn:
        start = self.peek()
        context: tuple[UserC, ...] = ()
        save = self.i
        try:
            context = self.parse_context()
            self.expect("=>")
        except ParseError:
            self.i = save
            context = ()
        ty = self.parse_type()
        return QualAnn(context, ty, start.line, start.col)

    def parse_context(self) -> tuple[UserC, ...]:
        if self.at("sym", "("):
            save = self.i
            self.advance()
            out = [self.parse_constraint()]
            while self.at("sym", ","):
                self.advance()
                out.append(self.parse_constraint())
            if not self.at("sym", ")"):
                self.i = save
                return (self.parse_constraint(),)
            self.advance()
            return tuple(out)
        return (self.parse_constraint(),)

    def parse_constraint(self) -> UserC:
        name = self.expect("conid")
        args = []
        while self._starts_atype():
            args.append(self.parse_atype())
        if not args:
            raise ParseError(f"class constraint `{name.text}` needs arguments", name.line, name.col)
        return UserC(name.text, tuple(args))

    def _starts_atype(self) -> bool:
        t = self.peek()
        return t.kind in ("varid", "conid") or (t.kind == "sym" and t.text in ("(", "["))

    def parse_type(self) -> Type:
        left = self.parse_btype()
        if self.at("->"):
            self.advance()
            return arrow(left, self.parse_type())
        return left

    def parse_btype(self) -> Type:
        t = self.parse_atype()
        while self._starts_atype():
            t = TApp(t, self.parse_atype())
        return t

    def parse_atype(self) -> Type:
        t = self.peek()
        if t.kind == "varid":
            self.advance()
            return TVar(t.text)
        if t.kind == "conid":
            self.advance()
            return TCon(t.text)
        if self.at("sym", "("):
            self.advance()
            inner = [self.parse_type()]
            while self.at("sym", ","):
                self.advance()
                inner.append(self.parse_type())
            self.expect_sym(")")
            if len(inner) == 1:
                return inner[0]
            if len(inner) == 2:
                return pair(inner[0], inner[1])
            raise ParseError("only pairs are supported", t.line, t.col)
        if self.at("sym", "["):
            self.advance()
            inner2 = self.parse_type()
            self.expect_sym("]")
            return TApp(LIST_CON, inner2)
        raise ParseError(f"expected a type, found {t.text!r}", t.line, t.col)

    def expect_sym(self, text: str) -> Token:
        t = self.peek()
        if not (t.kind == "sym" and t.text == text):
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return self.advance()

    # -- expressions ---------------------------------------------------

    def parse_expr(self) -> Expr:
        t = self.peek()
        if t.kind == "sym" and t.text == "\\":
            self.advance()
            params = []
            while self.peek().kind == "varid":
                params.append(self.advance())
            if not params:
                raise ParseError("lambda needs at least one parameter", t.line, t.col)
            self.expect("->")
            body = self.parse_expr()
            for p in reversed(params):
                body = self.node(EAbs(p.text, body), p)
            return body
        if t.kind == "let":
            return self.parse_let()
        return self.parse_opexpr()

    def parse_let(self) -> Expr:
        let_tok = self.expect("let")
        self.expect_sym("{")
        decls = self.parse_decl_block()
        self.expect_sym("}")
        self.expect("in")
        body = self.parse_expr()
        if len(decls) != 1:
            raise ParseError("let blocks bind exactly one name", let_tok.line, let_tok.col)
        name, ann, rhs, tok = decls[0]
        if ann is None:
            return self.node(ELet(name, rhs, body), let_tok)
        return self.node(ELetA(name, ann, rhs, body), let_tok)

    def parse_decl_block(self) -> list[tuple[str, Optional[QualAnn], Expr, Token]]:
        sigs: dict[str, QualAnn] = {}
        binds: list[tuple[str, Expr, Token]] = []
        while True:
            if self.at("sym", "}"):
                break
            self.parse_decl_into(sigs, binds)
            if self.at("sym", ";"):
                self.advance()
            else:
                break
        return self._merge_decls(sigs, binds)

    def parse_decl_into(self, sigs, binds) -> None:
        name_tok = self.peek()
        name = self.parse_def_name()
        if self.at("::"):
            self.advance()
            if name in sigs:
                raise ParseError(f"duplicate signature for `{name}`", name_tok.line, name_tok.col)
            sigs[name] = self.parse_qualtype()
            return
        params = []
        while self.peek().kind == "varid":
            params.append(self.advance())
        self.expect_sym("=")
        rhs = self.parse_expr()
        for p in reversed(params):
            rhs = self.node(EAbs(p.text, rhs), p)
        if any(b[0] == name for b in binds):
            raise ParseError(f"duplicate definition of `{name}`", name_tok.line, name_tok.col)
        binds.append((name, rhs, name_tok))

    def parse_def_name(self) -> str:
        if self.peek().kind == "varid":
            return self.advance().text
        if self.at("sym", "("):
            nxt = self.peek(1)
            if nxt.kind == "sym" and nxt.text in BINOPS:
                self.advance()
                op = self.advance()
                self.expect_sym(")")
                return op.text
        t = self.peek()
        raise ParseError(f"expected a definition name, found {t.text!r}", t.line, t.col)

    def _merge_decls(self, sigs, binds):
        out = []
        for name, rhs, tok in binds:
            out.append((name, sigs.pop(name, None), rhs, tok))
        for name, ann in sigs.items():
            raise ParseError(f"signature for `{name}` has no binding", ann.line, ann.col)
        return out

    def parse_opexpr(self) -> Expr:
        left = self.parse_appexpr()
        while self.peek().kind == "sym" and self.peek().text in BINOPS:
            op = self.advance()
            right = self.parse_appexpr()
            opv = self.node(EVar(op.text), op)
            left = self.node(EApp(self.node(EApp(opv, left), op), right), op)
        return left

    def parse_appexpr(self) -> Expr:
        e = self.parse_aexpr()
        while self._starts_aexpr():
            tok = self.peek()
            e = self.node(EApp(e, self.parse_aexpr()), tok)
        return e

    def _starts_aexpr(self) -> bool:
        t = self.peek()
        if t.kind in ("varid", "conid", "int", "char", "string", "let"):
            return True
        return t.kind == "sym" and t.text == "("

    def parse_aexpr(self) -> Expr:
        t = self.peek()
        if t.kind == "varid":
            self.advance()
            return self.node(EVar(t.text), t)
        if t.kind == "conid":
            if t.text in ("True", "False"):
                self.advance()
                return self.node(ELit(t.text, BOOL), t)
            raise ParseError(f"unknown constructor `{t.text}`", t.line, t.col)
        if t.kind == "int":
            self.advance()
            return self.node(ELit(t.text, INT), t)
        if t.kind == "char":
            self.advance()
            return self.node(ELit(t.text, CHAR), t)
        if t.kind == "string":
            self.advance()
            return self.node(ELit(t.text, STRING), t)
        if t.kind == "let":
            return self.parse_let()
        if t.kind == "sym" and t.text == "(":
            self.advance()
            if self.peek().kind == "sym" and self.peek().text in BINOPS:
                nxt = self.peek(1)
                if nxt.kind == "sym" and nxt.text == ")":
                    op = self.advance()
                    self.advance()
                    return self.node(EVar(op.text), op)
            e = self.parse_expr()
            if self.at("::"):
                self.advance()
                ann = self.parse_qualtype()
                self.expect_sym(")")
                return self.ascribe(e, ann, t)
            if self.at("sym", ","):
                self.advance()
                e2 = self.parse_expr()
                self.expect_sym(")")
                pv = self.node(EVar("(,)"), t)
                return self.node(EApp(self.node(EApp(pv, e), t), e2), t)
            self.expect_sym(")")
            return e
        raise ParseError(f"expected an expression, found {t.text or 'end of input'!r}", t.line, t.col)

    def ascribe(self, e: Expr, ann: QualAnn, tok: Token) -> Expr:
        if isinstance(e, ELit) and not ann.context:
            e.ty = ann.type
            return e
        name = f"_a{tok.line}_{tok.col}"
        use = self.node(EVar(name), tok)
        return self.node(ELetA(name, ann, e, use), tok)

    # -- declarations ---------------------------------------------------

    def parse_program(self, source_name: str) -> Program:
        classes: list[ClassDecl] = []
        instances: list[InstanceDecl] = []
        sigs: dict[str, QualAnn] = {}
        binds: list[tuple[str, Expr, Token]] = []
        while not self.at("eof"):
            if self.at("class"):
                classes.append(self.parse_class())
            elif self.at("instance"):
                instances.append(self.parse_instance(classes))
            else:
                self.parse_decl_into(sigs, binds)
            if self.at("sym", ";"):
                self.advance()
            elif not self.at("eof"):
                t = self.peek()
                raise ParseError(f"expected ';', found {t.text!r}", t.line, t.col)
        defs = []
        for name, ann, rhs, tok in self._merge_decls(sigs, binds):
            d = TopDef(name, ann, rhs)
            d.nid = self.next_nid
            self.next_nid += 1
            d.line, d.col = tok.line, tok.col
            defs.append(d)
        return Program(classes, instances, defs, source_name=source_name)

    def parse_class(self) -> ClassDecl:
        tok = self.expect("class")
        supers: tuple[UserC, ...] = ()
        save = self.i
        try:
            supers = self.parse_context()
            self.expect("=>")
        except ParseError:
            self.i = save
            supers = ()
        name = self.expect("conid")
        params = []
        while self.peek().kind == "varid":
            params.append(self.advance().text)
        if len(set(params)) != len(params):
            raise ParseError("duplicate class parameter", tok.line, tok.col)
        fundeps = []
        if self.at("sym", "|"):
            self.advance()
            fundeps.append(self.parse_fundep(params, tok))
            while self.at("sym", ","):
                self.advance()
                fundeps.append(self.parse_fundep(params, tok))
        methods = []
        if self.at("where"):
            self.advance()
            self.expect_sym("{")
            while not self.at("sym", "}"):
                mname = self.parse_def_name()
                self.expect("::")
                methods.append((mname, self.parse_qualtype()))
                if self.at("sym", ";"):
                    self.advance()
            self.expect_sym("}")
        d = ClassDecl(name.text, tuple(params), supers, tuple(fundeps), tuple(methods))
        d.nid = self.next_nid
        self.next_nid += 1
        d.line, d.col = tok.line, tok.col
        return d

    def parse_fundep(self, params: list[str], tok: Token) -> tuple[tuple[int, ...], tuple[int, ...]]:
        def side() -> tuple[int, ...]:
            out = []
            while self.peek().kind == "varid":
                v = self.advance()
                if v.text not in params:
                    raise ParseError(f"`{v.text}` is not a class parameter", v.line, v.col)
                out.append(params.index(v.text))
            if not out:
                t = self.peek()
                raise ParseError("empty side in functional dependency", t.line, t.col)
            return tuple(out)

        lhs = side()
        self.expect("->")
        return lhs, side()

    def parse_instance(self, classes: list[ClassDecl]) -> InstanceDecl:
        tok = self.expect("instance")
        context: tuple[UserC, ...] = ()
        save = self.i
        try:
            context = self.parse_context()
            self.expect("=>")
        except ParseError:
            self.i = save
            context = ()
        name = self.expect("conid")
        types = []
        while self._starts_atype():
            types.append(self.parse_atype())
        d = InstanceDecl(context, name.text, tuple(types))
        d.nid = self.next_nid
        self.next_nid += 1
        d.line, d.col = tok.line, tok.col
        return d


# ---------------------------------------------------------------------------
# Post-parse passes: unique names, binder type variables, lt order


def _walk_children(e: Expr):
    if isinstance(e, EAbs):
        yield e.body
    elif isinstance(e, EApp):
        yield e.fn
        yield e.arg
    elif isinstance(e, (ELet, ELetA)):
        yield e.rhs
        yield e.body


class _Renamer:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)

    def pick(self, name: str) -> str:
        if name not in self.taken:
            self.taken.add(name)
            return name
        n = 2
        while f"{name}_{n}" in self.taken:
            n += 1
        fresh = f"{name}_{n}"
        self.taken.add(fresh)
        return fresh

    def rename(self, e: Expr, env: dict[str, str]) -> None:
        if isinstance(e, EVar):
            e.name = env.get(e.name, e.name)
        elif isinstance(e, EAbs):
            orig = e.param
            e.param = self.pick(orig)
            self.rename(e.body, {**env, orig: e.param})
        elif isinstance(e, EApp):
            self.rename(e.fn, env)
            self.rename(e.arg, env)
        elif isinstance(e, (ELet, ELetA)):
            orig = e.name
            e.name = self.pick(orig)
            inner = {**env, orig: e.name}
            self.rename(e.rhs, inner)  # a definition is visible in its own rhs
            self.rename(e.body, inner)


def _alpha_rename(program: Program) -> None:
    taken = set(PRIMITIVE_NAMES) | set(program.method_names())
    for d in program.defs:
        if d.name in taken:
            raise ParseError(f"duplicate definition of `{d.name}`", d.line, d.col)
        taken.add(d.name)
    r = _Renamer(taken)
    top_env = {d.name: d.name for d in program.defs}
    for d in program.defs:
        r.rename(d.rhs, dict(top_env))


def _assign_binder_vars(program: Program) -> None:
    order: list[str] = []
    counter = [0]

    def walk(e: Expr) -> None:
        if isinstance(e, EAbs):
            counter[0] += 1
            e.param_tv = f"tx{counter[0]}"
            order.append(e.param_tv)
        for c in _walk_children(e):
            walk(c)

    for d in program.defs:
        walk(d.rhs)
    program.lt_order = order


def _collect_locs(program: Program) -> None:
    locs: dict[int, tuple[int, int]] = {}

    def walk(e: Expr) -> None:
        locs[e.nid] = (e.line, e.col)
        for c in _walk_children(e):
            walk(c)

    for d in program.defs:
        locs[d.nid] = (d.line, d.col)
        walk(d.rhs)
    for c in program.classes:
        locs[c.nid] = (c.line, c.col)
    for inst in program.instances:
        locs[inst.nid] = (inst.line, inst.col)
    program.locs = locs


def parse(source: str, source_name: str = "<input>") -> Program:
    """Parse a program, make every binder name unique, attach fresh type
    variables to lambda binders, and record source locations."""
    parser = _Parser(tokenize(source))
    program = parser.parse_program(source_name)
    _check_duplicate_heads(program)
    _alpha_rename(program)
    _assign_binder_vars(program)
    _collect_locs(program)
    return program


def parse_scheme_text(text: str):
    """Parse ``forall a b. C => t`` (quantifiers optional) into a scheme.

    Used by the corpus runner to read expected schemes from sidecars.
    """
    from .core import TypeScheme  # local import to keep module deps one-way

    parser = _Parser(tokenize(text))
    quantified: tuple[str, ...] = ()
    if parser.at("varid") and parser.peek().text == "forall":
        parser.advance()
        names = []
        while parser.peek().kind == "varid":
            names.append(parser.advance().text)
        parser.expect_sym(".")
        quantified = tuple(names)
    q = parser.parse_qualtype()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return TypeScheme(quantified, q.context, q.type)


def _check_duplicate_heads(program: Program) -> None:
    seen_classes: set[str] = set()
    for c in program.classes:
        if c.name in seen_classes:
            raise ParseError(f"duplicate class `{c.name}`", c.line, c.col)
        seen_classes.add(c.name)
    seen_instances: set[tuple] = set()
    for inst in program.instances:
        key = (inst.classname, tuple(inst.types))
        if key in seen_instances:
            raise ParseError(f"duplicate instance for `{inst.classname}`", inst.line, inst.col)
        seen_instances.add(key)


# ---------------------------------------------------------------------------
# Definition sites and classification


@dataclass
class DefSite:
    name: str
    annotated: Optional[QualAnn]
    rhs: Expr
    parent: Optional[str]  # enclosing definition, None for top level
    nid: int
    line: int
    col: int


def definition_sites(program: Program) -> dict[str, DefSite]:
    """All definitions, top-level and nested, keyed by (unique) name."""
    sites: dict[str, DefSite] = {}

    def walk(e: Expr, parent: str) -> None:
        if isinstance(e, (ELet, ELetA)):
            ann = e.ann if isinstance(e, ELetA) else None
            sites[e.name] = DefSite(e.name, ann, e.rhs, parent, e.nid, e.line, e.col)
            walk(e.rhs, e.name)
            walk(e.body, parent)
            return
        for c in _walk_children(e):
            walk(c, parent)

    for d in program.defs:
        sites[d.name] = DefSite(d.name, d.ann, d.rhs, None, d.nid, d.line, d.col)
        walk(d.rhs, d.name)
    return sites


def _direct_uses(site: DefSite, def_names: set[str]) -> list[str]:
    """Definition names used in this definition's own right-hand side,
    not counting uses inside nested definitions."""
    out: list[str] = []

    def walk(e: Expr) -> None:
        if isinstance(e, EVar):
            if e.name in def_names and e.name not in out:
                out.append(e.name)
        elif isinstance(e, (ELet, ELetA)):
            walk(e.body)  # the nested rhs belongs to the nested definition
        else:
            for c in _walk_children(e):
                walk(c)

    walk(site.rhs)
    return out


def _scope_check(program: Program, known: set[str]) -> None:
    def walk(e: Expr, bound: set[str]) -> None:
        if isinstance(e, EVar):
            if e.name not in bound and e.name not in known:
                raise UnboundVariable(e.name, e.line, e.col)
        elif isinstance(e, EAbs):
            walk(e.body, bound | {e.param})
        elif isinstance(e, (ELet, ELetA)):
            walk(e.rhs, bound | {e.name})
            walk(e.body, bound | {e.name})
        else:
            for c in _walk_children(e):
                walk(c, bound)

    for d in program.defs:
        walk(d.rhs, set())


@dataclass
class DefClass:
    """NRF / MRF / ARF classification for every definition."""

    kinds: dict[str, str]
    sccs: list[list[str]]

    def kind_of(self, name: str) -> str:
        return self.kinds.get(name, "NRF")

    def is_recursive(self, name: str) -> bool:
        return self.kinds.get(name) in ("MRF", "ARF")


def classify_definitions(program: Program) -> DefClass:
    """Classify definitions as non-recursive, monomorphic-recursive or
    annotated-recursive, and reject recursive groups with no annotation.

    A use of an annotated, recursive definition goes through its
    annotation rule, so such definitions break call cycles: the effective
    graph for the monomorphic-recursion check drops edges into them.
    """
    sites = definition_sites(program)
    known = set(sites) | set(program.method_names()) | set(PRIMITIVE_NAMES)
    _scope_check(program, known)

    names = set(sites)
    g = nx.DiGraph()
    g.add_nodes_from(names)
    for site in sites.values():
        for used in _direct_uses(site, names):
            g.add_edge(site.name, used)

    sccs = [sorted(c) for c in nx.strongly_connected_components(g)]
    raw_recursive: set[str] = set()
    for comp in sccs:
        if len(comp) > 1:
            raw_recursive.update(comp)
        elif g.has_edge(comp[0], comp[0]):
            raw_recursive.add(comp[0])

    for comp in sccs:
        if len(comp) > 1 and not any(sites[n].annotated for n in comp):
            first = min(comp, key=lambda n: sites[n].nid)
            raise UnsupportedRecursion(sorted(comp), sites[first].line, sites[first].col)

    eff = nx.DiGraph()
    eff.add_nodes_from(names)
    for u, v in g.edges:
        if not (sites[v].annotated and v in raw_recursive):
            eff.add_edge(u, v)
    eff_recursive: set[str] = set()
    for comp in nx.strongly_connected_components(eff):
        comp = list(comp)
        if len(comp) > 1:
            eff_recursive.update(comp)
        elif eff.has_edge(comp[0], comp[0]):
            eff_recursive.add(comp[0])

    kinds: dict[str, str] = {}
    for name, site in sites.items():
        if site.annotated and name in raw_recursive:
            kinds[name] = "ARF"
        elif not site.annotated and name in eff_recursive:
            kinds[name] = "MRF"
        else:
            kinds[name] = "NRF"
    return DefClass(kinds, [sorted(c) for c in sccs])


# ---------------------------------------------------------------------------
# Source pretty printer (round-trips through parse up to alpha renaming)


def type_src(t: Type) -> str:
    ar = as_arrow(t)
    if ar is not None:
        lhs, rhs = ar
        left = type_src(lhs)
        if as_arrow(lhs) is not None:
            left = f"({left})"
        return f"{left} -> {type_src(rhs)}"
    p = as_binary(t, PAIR)
    if p is not None:
        return f"({type_src(p[0])}, {type_src(p[1])})"
    head, args = spine(t)
    if head == LIST_CON and len(args) == 1:
        return f"[{type_src(args[0])}]"
    if isinstance(t, (TVar, TCon)):
        return t.name
    out = [type_src(head)]
    for a in args:
        s = type_src(a)
        out.append(s if isinstance(a, (TVar, TCon)) else f"({s})")
    return " ".join(out)


def qualann_src(q: QualAnn) -> str:
    ty = type_src(q.type)
    if not q.context:
        return ty
    cs = ", ".join(f"{c.pred} " + " ".join(type_src(a) for a in c.args) for c in q.context)
    return f"({cs}) => {ty}" if len(q.context) > 1 else f"{cs} => {ty}"


def expr_src(e: Expr) -> str:
    if isinstance(e, EVar):
        return f"({e.name})" if e.name in BINOPS else e.name
    if isinstance(e, ELit):
        return e.text
    if isinstance(e, EAbs):
        return f"(\\{e.param} -> {expr_src(e.body)})"
    if isinstance(e, EApp):
        fn, arg = e.fn, e.arg
        if isinstance(fn, EApp) and isinstance(fn.fn, EVar):
            op = fn.fn.name
            if op == "(,)":
                return f"({expr_src(fn.arg)}, {expr_src(arg)})"
            if op in BINOPS:
                return f"({expr_src(fn.arg)} {op} {expr_src(arg)})"
        return f"({expr_src(fn)} {expr_src(arg)})"
    if isinstance(e, ELet):
        return f"(let {{ {e.name} = {expr_src(e.rhs)} }} in {expr_src(e.body)})"
    if isinstance(e, ELetA):
        return (
            f"(let {{ {e.name} :: {qualann_src(e.ann)}; "
            f"{e.name} = {expr_src(e.rhs)} }} in {expr_src(e.body)})"
        )
    raise TypeError(f"not an expression: {e!r}")


def program_src(p: Program) -> str:
    lines: list[str] = []
    for c in p.classes:
        head = f"class {c.name} " + " ".join(c.params)
        if c.supers:
            sup = ", ".join(
                f"{s.pred} " + " ".join(type_src(a) for a in s.args) for s in c.supers
            )
            head = f"class ({sup}) => {c.name} " + " ".join(c.params)
        if c.fundeps:
            fds = ", ".join(
                " ".join(c.params[i] for i in lhs) + " -> " + " ".join(c.params[j] for j in rhs)
                for lhs, rhs in c.fundeps
            )
            head += f" | {fds}"
        if c.methods:
            ms = "; ".join(
                (f"({m})" if m in BINOPS else m) + f" :: {qualann_src(q)}" for m, q in c.methods
            )
            head += f" where {{ {ms} }}"
        lines.append(head + ";")
    for inst in p.instances:
        head = f"instance {inst.classname} " + " ".join(
            type_src(t) if isinstance(t, (TVar, TCon)) else f"({type_src(t)})"
            for t in inst.types
        )
        if inst.context:
            cs = ", ".join(
                f"{s.pred} " + " ".join(type_src(a) for a in s.args) for s in inst.context
            )
            head = f"instance ({cs}) => " + head[len("instance ") :]
        lines.append(head + ";")
    for d in p.defs:
        if d.ann is not None:
            lines.append(f"{d.name} :: {qualann_src(d.ann)};")
        lines.append(f"{d.name} = {expr_src(d.rhs)};")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Alpha equivalence of parsed programs


def alpha_eq_expr(a: Expr, b: Expr, env: Optional[dict[str, str]] = None) -> bool:
    env = env or {}
    if type(a) is not type(b):
        return False
    if isinstance(a, EVar):
        return env.get(a.name, a.name) == b.name
    if isinstance(a, ELit):
        return a.text == b.text and a.ty == b.ty
    if isinstance(a, EAbs):
        return alpha_eq_expr(a.body, b.body, {**env, a.param: b.param})
    if isinstance(a, EApp):
        return alpha_eq_expr(a.fn, b.fn, env) and alpha_eq_expr(a.arg, b.arg, env)
    if isinstance(a, (ELet, ELetA)):
        if isinstance(a, ELetA):
            if qualann_src(a.ann) != qualann_src(b.ann):  # type: ignore[union-attr]
                return False
        inner = {**env, a.name: b.name}
        return alpha_eq_expr(a.rhs, b.rhs, inner) and alpha_eq_expr(a.body, b.body, inner)
    return False


def alpha_eq_program(a: Program, b: Program) -> bool:
    if len(a.defs) != len(b.defs):
        return False
    if program_src(Program(a.classes, a.instances, [])) != program_src(
        Program(b.classes, b.instances, [])
    ):
        return False
    for da, db in zip(a.defs, b.defs):
        if da.name != db.name:
            return False
        if (da.ann is None) != (db.ann is None):
            return False
        if da.ann is not None and qualann_src(da.ann) != qualann_src(db.ann):
            return False
        if not alpha_eq_expr(da.rhs, db.rhs):
            return False
    return True
