"""From programs to constraint handling rules.

Class and instance declarations become the theory rules; method and
primitive signatures become initial rules of the shape
``f(t, l) <=> C, t = t'``; every definition contributes one rule (two
when annotated) whose body is the constraint generated from its
right-hand side plus the environment-threading equation and a marked
call to the enclosing definition.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .core import (
    BOOL,
    INT,
    Constraint,
    EqC,
    Marker,
    NameSupply,
    Subst,
    TVar,
    Type,
    TypeScheme,
    UnifyError,
    UserC,
    arrows,
    constraint_str,
    env_pair,
    free_vars_of,
    pair,
    rename_vars,
    tlist,
    unify,
)
from .surface import (
    DefClass,
    DefSite,
    EAbs,
    EApp,
    ELet,
    ELetA,
    ELit,
    EVar,
    Expr,
    PRIMITIVE_NAMES,
    Program,
    definition_sites,
)

TOP_PRED = "%top"

_TV = TVar


def _scheme(quantified: Iterable[str], context: Iterable[UserC], body: Type) -> TypeScheme:
    return TypeScheme(tuple(quantified), tuple(context), body)


PRIMITIVES: dict[str, TypeScheme] = {
    "+": _scheme((), (), arrows([INT, INT], INT)),
    "&&": _scheme((), (), arrows([BOOL, BOOL], BOOL)),
    "const": _scheme(("a", "b"), (), arrows([_TV("a"), _TV("b")], _TV("a"))),
    "(,)": _scheme(("a", "b"), (), arrows([_TV("a"), _TV("b")], pair(_TV("a"), _TV("b")))),
}

assert set(PRIMITIVES) == set(PRIMITIVE_NAMES)


class TranslateError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class ChrRule:
    """Single-headed simplification or multi-headed propagation rule."""

    rid: str
    heads: tuple[UserC, ...]
    simp: bool
    body: tuple[Constraint, ...]
    origin: tuple[str, str]  # (kind, subject) e.g. ("def", "g"), ("instance", "Foo")

    def __post_init__(self) -> None:
        if not self.heads:
            raise ValueError("a rule needs at least one head")
        if self.simp and len(self.heads) != 1:
            raise ValueError("simplification rules are single-headed")

    def head_vars(self) -> list[str]:
        return free_vars_of(self.heads)

    def all_vars(self) -> list[str]:
        return free_vars_of([*self.heads, *self.body])


def rule_str(r: ChrRule) -> str:
    heads = ", ".join(constraint_str(h) for h in r.heads)
    arrow_sym = "⇔" if r.simp else "⟹"
    body = ", ".join(constraint_str(c) for c in r.body) if r.body else "True"
    return f"{heads} {arrow_sym} {body}"


def rename_rule_apart(r: ChrRule, avoid: set[str], supply: NameSupply) -> ChrRule:
    ren = rename_vars(r.all_vars(), avoid, supply)
    return replace(
        r,
        heads=tuple(ren.apply_constraint(h) for h in r.heads),  # type: ignore[misc]
        body=tuple(ren.apply_constraint(c) for c in r.body),
    )


@dataclass(frozen=True)
class ChrProgram:
    theory: tuple[ChrRule, ...]
    init: tuple[ChrRule, ...]
    generated: tuple[ChrRule, ...]

    def rules(self) -> tuple[ChrRule, ...]:
        return self.theory + self.init + self.generated

    def rules_for(self, pred: str) -> list[ChrRule]:
        return [r for r in self.rules() if any(h.pred == pred for h in r.heads)]

    def __post_init__(self) -> None:
        ids = [r.rid for r in self.rules()]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate rule ids: {dupes}")

    def dump(self) -> str:
        return "\n".join(rule_str(r) for r in self.rules()) + "\n"


# ---------------------------------------------------------------------------
# Theory translation


@dataclass
class TheoryInfo:
    class_arity: dict[str, int]
    class_fundeps: dict[str, tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]]
    method_schemes: dict[str, TypeScheme]
    method_class: dict[str, str]
    instances: list[tuple[str, tuple[Type, ...], tuple[UserC, ...], int]]


def _check_constraint_arity(c: UserC, arity: dict[str, int], line: int, col: int) -> None:
    if c.pred not in arity:
        raise TranslateError(f"unknown class `{c.pred}`", line, col)
    if len(c.args) != arity[c.pred]:
        raise TranslateError(
            f"class `{c.pred}` expects {arity[c.pred]} argument(s), got {len(c.args)}",
            line,
            col,
        )


def translate_theory(program: Program) -> tuple[list[ChrRule], TheoryInfo]:
    """Classes and instances to theory rules, methods to initial schemes."""
    arity = {c.name: len(c.params) for c in program.classes}
    info = TheoryInfo(arity, {}, {}, {}, [])
    rules: list[ChrRule] = []

    for c in program.classes:
        params = tuple(TVar(p) for p in c.params)
        info.class_fundeps[c.name] = c.fundeps
        for s in c.supers:
            _check_constraint_arity(s, arity, c.line, c.col)
            bad = set(free_vars_of([s])) - set(c.params)
            if bad:
                raise TranslateError(
                    f"superclass constraint mentions {sorted(bad)}", c.line, c.col
                )
        if c.supers:
            rules.append(
                ChrRule(
                    f"{c.name}/super",
                    (UserC(c.name, params),),
                    False,
                    tuple(replace(s, locs=(c.nid,)) for s in c.supers),
                    ("class", c.name),
                )
            )
        for k, (det, dep) in enumerate(c.fundeps, start=1):
            other = tuple(
                params[i] if i in det else TVar(f"{c.params[i]}'") for i in range(len(params))
            )
            body = tuple(
                EqC(params[j], other[j], locs=(c.nid,)) for j in dep if j not in det
            )
            if body:
                rules.append(
                    ChrRule(
                        f"{c.name}/fd{k}",
                        (UserC(c.name, params), UserC(c.name, other)),
                        False,
                        body,
                        ("class", c.name),
                    )
                )
        for mname, q in c.methods:
            if mname in info.method_schemes:
                raise TranslateError(f"duplicate method `{mname}`", c.line, c.col)
            for ctx in q.context:
                _check_constraint_arity(ctx, arity, c.line, c.col)
            context = (UserC(c.name, params), *q.context)
            quantified = free_vars_of([*context, q.type])
            info.method_schemes[mname] = _scheme(quantified, context, q.type)
            info.method_class[mname] = c.name

    for n, inst in enumerate(program.instances, start=1):
        _check_constraint_arity(
            UserC(inst.classname, inst.types), arity, inst.line, inst.col
        )
        for ctx in inst.context:
            _check_constraint_arity(ctx, arity, inst.line, inst.col)
        info.instances.append((inst.classname, inst.types, inst.context, inst.nid))
        rules.append(
            ChrRule(
                f"{inst.classname}/inst{n}",
                (UserC(inst.classname, inst.types),),
                True,
                tuple(replace(ctx, locs=(inst.nid,)) for ctx in inst.context),
                ("instance", inst.classname),
            )
        )
    return rules, info


def overlapping_instances(info: TheoryInfo) -> list[tuple[str, int, int]]:
    """Pairs of instances of one class whose heads unify."""
    out = []
    byclass: dict[str, list[tuple[tuple[Type, ...], int]]] = {}
    for cls, types, _ctx, nid in info.instances:
        byclass.setdefault(cls, []).append((types, nid))
    supply = NameSupply()
    for cls, insts in byclass.items():
        for i in range(len(insts)):
            for j in range(i + 1, len(insts)):
                a, na = insts[i]
                b, nb = insts[j]
                ren = rename_vars(free_vars_of(list(b)), set(free_vars_of(list(a))), supply)
                b2 = tuple(ren.apply(t) for t in b)
                try:
                    unify(list(zip(a, b2)))
                except UnifyError:
                    continue
                out.append((cls, na, nb))
    return out


# ---------------------------------------------------------------------------
# Initial rules for primitives and methods

_RESERVED_RULE_VARS = {"t", "l"}


def _sanitize(vars_: Iterable[str], scheme_like) -> Subst:
    clash = [v for v in vars_ if v in _RESERVED_RULE_VARS or re.fullmatch(r"(t|tx|lr|lg|tp|tf)\d+.*", v)]
    return Subst({v: TVar(f"{v}_A") for v in clash})


def _init_rule(name: str, scheme: TypeScheme, origin: tuple[str, str], loc: int) -> ChrRule:
    ren = _sanitize(free_vars_of([scheme.body, *scheme.context]), scheme)
    body_ty = ren.apply(scheme.body)
    ctx = tuple(ren.apply_constraint(c) for c in scheme.context)
    t, l = TVar("t"), TVar("l")
    body = tuple(replace(c, locs=(loc,)) for c in ctx) + (EqC(t, body_ty, locs=(loc,)),)
    return ChrRule(f"{name}/init", (UserC(name, (t, l)),), True, body, origin)


def initial_rules(program: Program, info: TheoryInfo) -> list[ChrRule]:
    rules = [ChrRule(TOP_PRED, (UserC(TOP_PRED, (TVar("t"), TVar("l"))),), True, (), ("top", ""))]
    for name in PRIMITIVE_NAMES:
        rules.append(_init_rule(name, PRIMITIVES[name], ("primitive", name), -1))
    for c in program.classes:
        for mname, _q in c.methods:
            rules.append(_init_rule(mname, info.method_schemes[mname], ("method", mname), c.nid))
    return rules


# ---------------------------------------------------------------------------
# Constraint and rule generation


@dataclass
class GenOutput:
    constraints: list[Constraint]
    result_type: Type
    rules: list[ChrRule]


@dataclass
class _Names:
    """Predicate names for definitions; annotation predicates get an
    ``_a`` suffix, kept clash-free against real definition names."""

    def_pred: dict[str, str]
    ann_pred: dict[str, str]

    @staticmethod
    def build(sites: dict[str, DefSite]) -> "_Names":
        def_pred = {name: name for name in sites}
        ann_pred: dict[str, str] = {}
        taken = set(sites)
        for name, site in sites.items():
            if site.annotated is None:
                continue
            cand = f"{name}_a"
            while cand in taken:
                cand += "'"
            taken.add(cand)
            ann_pred[name] = cand
        return _Names(def_pred, ann_pred)


class RuleGen:
    def __init__(self, program: Program, defclass: DefClass, info: TheoryInfo):
        self.program = program
        self.defclass = defclass
        self.info = info
        self.sites = definition_sites(program)
        self.names = _Names.build(self.sites)
        self.rules: list[ChrRule] = []
        self.parent: Optional[str] = None
        self.lt = tlist([TVar(v) for v in program.lt_order], None)

    # -- use sites -------------------------------------------------------

    def use_pred(self, name: str) -> str:
        if name in self.sites:
            if self.sites[name].annotated is not None and self.defclass.is_recursive(name):
                return self.names.ann_pred[name]
            return self.names.def_pred[name]
        return name  # method or primitive

    def gen_expr(self, e: Expr, gamma: list[tuple[str, str]], visible: set[str]) -> tuple[list[Constraint], Type]:
        if isinstance(e, EVar):
            binder = next((tv for n, tv in reversed(gamma) if n == e.name), None)
            t2 = TVar(f"t{e.nid}")
            if binder is not None:
                return [EqC(t2, TVar(binder), locs=(e.nid,))], t2
            l = TVar(f"l{e.nid}")
            local = tlist([TVar(tv) for _, tv in gamma], None)
            cons: list[Constraint] = [
                UserC(self.use_pred(e.name), (t2, l), locs=(e.nid,)),
                EqC(l, env_pair(local, TVar(f"lg{e.nid}")), locs=(e.nid,)),
            ]
            return cons, t2
        if isinstance(e, ELit):
            t2 = TVar(f"t{e.nid}")
            return [EqC(t2, e.ty, locs=(e.nid,))], t2
        if isinstance(e, EAbs):
            c_body, t_body = self.gen_expr(e.body, gamma + [(e.param, e.param_tv)], visible)
            t3 = TVar(f"t{e.nid}")
            return c_body + [EqC(t3, arrow(TVar(e.param_tv), t_body), locs=(e.nid,))], t3
        if isinstance(e, EApp):
            c1, t1 = self.gen_expr(e.fn, gamma, visible)
            c2, t2 = self.gen_expr(e.arg, gamma, visible)
            t3 = TVar(f"t{e.nid}")
            return c1 + c2 + [EqC(t1, arrow(t2, t3), locs=(e.nid,))], t3
        if isinstance(e, (ELet, ELetA)):
            self.gen_def(e.name, e.rhs, gamma)
            return self.gen_expr(e.body, gamma, visible | {e.name})
        raise TypeError(f"not an expression: {e!r}")

    # -- definition sites --------------------------------------------------

    def gen_def(self, name: str, rhs: Expr, gamma: list[tuple[str, str]]) -> None:
        site = self.sites[name]
        nid = site.nid
        saved_parent = self.parent
        self.parent = name
        c1, t1 = self.gen_expr(rhs, gamma, set())
        self.parent = saved_parent

        t, l = TVar("t"), TVar("l")
        parent_pred = self.names.def_pred[saved_parent] if saved_parent else TOP_PRED
        parent_call = UserC(
            parent_pred, (TVar(f"tp{nid}"), l), Marker.MINUS, locs=(nid,)
        )

        def local_list(suffix: str) -> Type:
            return tlist([TVar(tv) for _, tv in gamma], TVar(f"lr{nid}{suffix}"))

        if site.annotated is None:
            body = (
                *c1,
                EqC(t1, t, locs=(nid,)),
                EqC(l, env_pair(local_list(""), self.lt), locs=(nid,)),
                parent_call,
            )
            self.rules.append(
                ChrRule(self.names.def_pred[name], (UserC(name, (t, l)),), True, body, ("def", name))
            )
            return

        ann = site.annotated
        ren = _sanitize(free_vars_of([ann.type, *ann.context]), ann)
        ann_ty = ren.apply(ann.type)
        ann_ctx = tuple(replace(ren.apply_constraint(c), locs=(nid,)) for c in ann.context)
        for ctx in ann.context:
            _check_constraint_arity(ctx, self.info.class_arity, site.line, site.col)
        ga = self.names.ann_pred[name]
        ga_body = (
            EqC(t, ann_ty, locs=(nid,)),
            *ann_ctx,
            EqC(l, env_pair(local_list("a"), self.lt), locs=(nid,)),
            parent_call,
        )
        self.rules.append(ChrRule(ga, (UserC(ga, (t, l)),), True, ga_body, ("ann", name)))
        g_body = (
            EqC(l, env_pair(local_list(""), self.lt), locs=(nid,)),
            UserC(ga, (t, l), locs=(nid,)),
            *c1,
            EqC(t, t1, locs=(nid,)),
        )
        self.rules.append(
            ChrRule(self.names.def_pred[name], (UserC(name, (t, l)),), True, g_body, ("def", name))
        )


def gen_rules(program: Program, defclass: DefClass, info: TheoryInfo) -> tuple[list[ChrRule], _Names]:
    gen = RuleGen(program, defclass, info)
    for d in program.defs:
        gen.gen_def(d.name, d.rhs, [])
    return gen.rules, gen.names


def gen_constraints(
    program: Program,
    defclass: DefClass,
    info: TheoryInfo,
    expr: Expr,
    gamma: list[tuple[str, str]],
) -> GenOutput:
    """Constraint generation for one expression; rules of definitions
    nested inside it come along in the output."""
    gen = RuleGen(program, defclass, info)
    cons, t = gen.gen_expr(expr, gamma, set())
    return GenOutput(cons, t, gen.rules)


# ---------------------------------------------------------------------------
# Forced calls


def insert_forced_calls(chr_program: ChrProgram, program: Program) -> ChrProgram:
    """Give every definition rule a marked call to each nested definition
    its body never mentions, so annotation checking sees the nested
    definition's effect on shared binders."""
    sites = definition_sites(program)
    names = _Names.build(sites)
    extra: dict[str, list[UserC]] = {}
    for name, site in sites.items():
        if site.parent is None:
            continue
        parent_rule = next(
            r for r in chr_program.generated if r.origin == ("def", site.parent)
        )
        called = {names.def_pred[name], names.ann_pred.get(name)}
        if any(isinstance(c, UserC) and c.pred in called for c in parent_rule.body):
            continue
        extra.setdefault(site.parent, []).append(
            UserC(
                names.def_pred[name],
                (TVar(f"tf{site.nid}"), TVar("l")),
                Marker.MINUS,
                locs=(site.nid,),
            )
        )
    if not extra:
        return chr_program
    new_rules = []
    for r in chr_program.generated:
        if r.origin[0] == "def" and r.origin[1] in extra:
            calls = sorted(extra[r.origin[1]], key=lambda c: c.locs)
            r = replace(r, body=r.body + tuple(calls))
        new_rules.append(r)
    return replace(chr_program, generated=tuple(new_rules))


# ---------------------------------------------------------------------------
# Whole-program translation


@dataclass
class Translation:
    chr: ChrProgram
    info: TheoryInfo
    def_pred: dict[str, str]
    ann_pred: dict[str, str]
    sites: dict[str, DefSite]
    defclass: DefClass
    program: Program

    def function_kinds(self) -> dict[str, str]:
        """Predicate name -> NRF/MRF/ARF, for every call-shaped predicate."""
        kinds = {}
        for name, pred in self.def_pred.items():
            kinds[pred] = self.defclass.kind_of(name)
        for name, pred in self.ann_pred.items():
            kinds[pred] = self.defclass.kind_of(name)
        kinds[TOP_PRED] = "NRF"
        return kinds


def translate_program(
    program: Program, defclass: DefClass, forced_calls: bool = True
) -> Translation:
    theory, info = translate_theory(program)
    init = initial_rules(program, info)
    generated, names = gen_rules(program, defclass, info)
    chrp = ChrProgram(tuple(theory), tuple(init), tuple(generated))
    if forced_calls:
        chrp = insert_forced_calls(chrp, program)
    return Translation(
        chrp, info, names.def_pred, names.ann_pred, definition_sites(program), defclass, program
    )
