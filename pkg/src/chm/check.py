"""Verdicts: satisfiability, annotation subsumption, scheme building,
ambiguity and the completeness-precondition lints.

An annotation is correct when running its annotation predicate and its
definition predicate on the same fresh interface pair yields final
stores that are logically equivalent up to a renaming of the variables
not in the interface.  The comparison works on unifier-normalized
stores: the result type and the user constraints (as a set, conjunction
being idempotent) must match under one variable bijection, and the
environment component must match under a bijection of its own, since the
identities of environment slots are plumbing rather than content.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .core import (
    Constraint,
    ENV_PAIR,
    Marker,
    TApp,
    TCon,
    TList,
    TVar,
    Type,
    TypeScheme,
    UserC,
    as_binary,
    constraint_str,
    free_type_vars,
    free_vars_of,
    type_str,
)
from .solver import DEFAULT_FUEL, DeriveResult, derive
from .surface import (
    ELet,
    ELetA,
    EVar,
    Expr,
    Program,
    UnboundVariable,
    UnsupportedRecursion,
    _walk_children,
    classify_definitions,
)
from .translate import (
    ChrProgram,
    TheoryInfo,
    TranslateError,
    Translation,
    overlapping_instances,
    translate_program,
)


# ---------------------------------------------------------------------------
# Satisfiability


@dataclass
class SatResult:
    status: str  # "satisfiable" | "unsatisfiable" | "unknown"
    result: DeriveResult

    def witness(self) -> Optional[str]:
        bad = self.result.store.inconsistent
        if bad is None:
            return None
        eq, err = bad
        return f"{err} in {constraint_str(eq)}"


def check_sat(
    constraints: Iterable[Constraint],
    rules: ChrProgram,
    function_kinds: dict[str, str],
    fuel: int = DEFAULT_FUEL,
    paranoid: bool = False,
) -> SatResult:
    res = derive(constraints, rules, function_kinds, fuel=fuel, paranoid=paranoid)
    status = {"final": "satisfiable", "inconsistent": "unsatisfiable", "fuel": "unknown"}[
        res.status
    ]
    return SatResult(status, res)


# ---------------------------------------------------------------------------
# Store equivalence modulo the interface variables


def _store_shape(res: DeriveResult, t: TVar, l: TVar) -> tuple[Type, Type, list[UserC]]:
    phi = res.store.phi
    users: list[UserC] = []
    seen: set = set()
    for _, c in res.store.live_constraints():
        n = phi.apply_constraint(replace(c, marker=Marker.EMPTY, locs=()))
        key = (n.pred, n.args)  # type: ignore[union-attr]
        if key not in seen:
            seen.add(key)
            users.append(n)  # type: ignore[arg-type]
    return phi.apply(t), phi.apply(l), users


def _walk_bij(a: Type, b: Type, fwd: dict, bwd: dict) -> bool:
    if isinstance(a, TVar) and isinstance(b, TVar):
        if fwd.get(a.name, b.name) != b.name or bwd.get(b.name, a.name) != a.name:
            return False
        fwd[a.name] = b.name
        bwd[b.name] = a.name
        return True
    if isinstance(a, TCon) and isinstance(b, TCon):
        return a == b
    if isinstance(a, TApp) and isinstance(b, TApp):
        return _walk_bij(a.fun, b.fun, fwd, bwd) and _walk_bij(a.arg, b.arg, fwd, bwd)
    if isinstance(a, TList) and isinstance(b, TList):
        if len(a.prefix) != len(b.prefix) or (a.tail is None) != (b.tail is None):
            return False
        for x, y in zip(a.prefix, b.prefix):
            if not _walk_bij(x, y, fwd, bwd):
                return False
        return a.tail is None or _walk_bij(a.tail, b.tail, fwd, bwd)
    return False


def _match_user_sets(
    xs: list[UserC], ys: list[UserC], fwd: dict, bwd: dict
) -> Optional[UserC]:
    """Backtracking bijection search; returns an unmatched constraint as
    witness on failure, None on success."""
    if len(xs) != len(ys):
        longer, shorter = (xs, ys) if len(xs) > len(ys) else (ys, xs)
        # best effort: greedily match the smaller side in, report a leftover
        left = list(longer)
        for c in shorter:
            for i, cand in enumerate(left):
                f2, b2 = dict(fwd), dict(bwd)
                if (
                    cand.pred == c.pred
                    and len(cand.args) == len(c.args)
                    and all(_walk_bij(x, y, f2, b2) for x, y in zip(c.args, cand.args))
                ):
                    left.pop(i)
                    break
        mismatched = [c for c in left if c.pred not in {s.pred for s in shorter}]
        return (mismatched or left)[0]

    def go(rest: list[UserC], avail: list[UserC], fwd: dict, bwd: dict) -> bool:
        if not rest:
            fwd_final.update(fwd)
            bwd_final.update(bwd)
            return True
        first, *others = rest
        for i, cand in enumerate(avail):
            if cand.pred != first.pred or len(cand.args) != len(first.args):
                continue
            f2, b2 = dict(fwd), dict(bwd)
            if all(_walk_bij(x, y, f2, b2) for x, y in zip(first.args, cand.args)):
                if go(others, avail[:i] + avail[i + 1 :], f2, b2):
                    return True
        return False

    fwd_final: dict = {}
    bwd_final: dict = {}
    # order by a cheap signature so failures surface early
    xs_sorted = sorted(xs, key=lambda c: (c.pred, len(c.args)))
    if go(xs_sorted, list(ys), fwd, bwd):
        fwd.clear()
        fwd.update(fwd_final)
        bwd.clear()
        bwd.update(bwd_final)
        return None
    return xs_sorted[0] if xs_sorted else None


def stores_equivalent(
    res1: DeriveResult, res2: DeriveResult, t: TVar, l: TVar
) -> tuple[bool, Optional[str]]:
    """Equivalence of two final stores modulo the interface {t, l}."""
    t1, l1, users1 = _store_shape(res1, t, l)
    t2, l2, users2 = _store_shape(res2, t, l)
    fwd = {t.name: t.name, l.name: l.name}
    bwd = dict(fwd)
    if not _walk_bij(t1, t2, fwd, bwd):
        return False, f"result types differ: {type_str(t1)} vs {type_str(t2)}"
    unmatched = _match_user_sets(users1, users2, fwd, bwd)
    if unmatched is not None:
        return False, f"constraint {constraint_str(unmatched)} has no counterpart"
    # Of the environment pair, only the local component is content: it
    # holds the binders in scope at the definition site, which both sides
    # must constrain alike.  The program-wide list also threads slots for
    # binders of the definition itself and of unrelated scopes; those are
    # plumbing, as are the slot identities, so the comparison uses a
    # bijection of its own.
    p1, p2 = as_binary(l1, ENV_PAIR), as_binary(l2, ENV_PAIR)
    local1: Type = p1[0] if p1 is not None else l1
    local2: Type = p2[0] if p2 is not None else l2
    if (p1 is None) != (p2 is None):
        return False, f"environment components differ: {type_str(l1)} vs {type_str(l2)}"
    fwd_l = {t.name: t.name, l.name: l.name}
    bwd_l = dict(fwd_l)
    if not _walk_bij(local1, local2, fwd_l, bwd_l):
        return (
            False,
            f"environment components differ: {type_str(local1)} vs {type_str(local2)}",
        )
    return True, None


# ---------------------------------------------------------------------------
# Subsumption


@dataclass(frozen=True)
class SubsumptionProblem:
    name: str
    def_pred: str
    ann_pred: str
    nid: int


def subsumption_problems(tr: Translation) -> list[SubsumptionProblem]:
    out = [
        SubsumptionProblem(name, tr.def_pred[name], pred, tr.sites[name].nid)
        for name, pred in tr.ann_pred.items()
    ]
    return sorted(out, key=lambda p: p.nid)


@dataclass
class SubsumptionVerdict:
    verdict: str  # "Correct" | "Incorrect" | "Unknown"
    witness: Optional[str] = None
    ann_result: Optional[DeriveResult] = None
    def_result: Optional[DeriveResult] = None


def check_subsumption(
    problem: SubsumptionProblem,
    rules: ChrProgram,
    function_kinds: dict[str, str],
    fuel: int = DEFAULT_FUEL,
    paranoid: bool = False,
) -> SubsumptionVerdict:
    t, l = TVar("t"), TVar("l")
    ra = derive([UserC(problem.ann_pred, (t, l))], rules, function_kinds, fuel, paranoid)
    rd = derive([UserC(problem.def_pred, (t, l))], rules, function_kinds, fuel, paranoid)
    if "fuel" in (ra.status, rd.status):
        return SubsumptionVerdict("Unknown", "derivation ran out of fuel", ra, rd)
    if ra.status == "inconsistent" or rd.status == "inconsistent":
        if ra.status == rd.status:
            return SubsumptionVerdict("Correct", None, ra, rd)
        side = "annotation" if ra.status == "inconsistent" else "definition"
        bad = (ra if side == "annotation" else rd).store.inconsistent
        assert bad is not None
        return SubsumptionVerdict(
            "Incorrect", f"only the {side} side is unsatisfiable ({bad[1]})", ra, rd
        )
    ok, witness = stores_equivalent(ra, rd, t, l)
    return SubsumptionVerdict("Correct" if ok else "Incorrect", witness, ra, rd)


# ---------------------------------------------------------------------------
# Type schemes


@dataclass
class SchemeResult:
    scheme: Optional[TypeScheme]
    env_context: tuple[UserC, ...] = ()  # marked constraints retained for display
    failure: Optional[str] = None
    result: Optional[DeriveResult] = None


def _dedup_users(cs: Iterable[UserC]) -> list[UserC]:
    out: list[UserC] = []
    seen = set()
    for c in cs:
        key = (c.pred, c.args)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def build_scheme(
    pred: str,
    rules: ChrProgram,
    function_kinds: dict[str, str],
    fuel: int = DEFAULT_FUEL,
    paranoid: bool = False,
    precomputed: Optional[DeriveResult] = None,
) -> SchemeResult:
    t, l = TVar("t"), TVar("l")
    res = precomputed or derive([UserC(pred, (t, l))], rules, function_kinds, fuel, paranoid)
    if res.status == "fuel":
        return SchemeResult(None, failure="derivation ran out of fuel", result=res)
    if res.status == "inconsistent":
        eq, err = res.store.inconsistent  # type: ignore[misc]
        return SchemeResult(None, failure=f"{err} in {constraint_str(eq)}", result=res)
    phi = res.store.phi
    live = [phi.apply_constraint(c) for _, c in res.store.live_constraints()]
    users = [c for c in live if isinstance(c, UserC)]
    unmarked = _dedup_users(c for c in users if c.marker is Marker.EMPTY)
    marked = _dedup_users(c for c in users if c.marker is Marker.MINUS)
    body = phi.apply(t)

    ll = phi.apply(l)
    local = as_binary(ll, ENV_PAIR)
    local_vars = set(free_type_vars(local[0])) if local is not None else set()
    marked_vars = set(free_vars_of(marked))
    context = tuple(replace(c, locs=()) for c in unmarked)
    quantified = tuple(
        v
        for v in free_vars_of([*context, body])
        if v not in local_vars and v not in marked_vars
    )
    scheme = TypeScheme(quantified, context, body)
    env = tuple(replace(c, locs=()) for c in marked)
    return SchemeResult(scheme, env, None, res)


# ---------------------------------------------------------------------------
# Ambiguity


def fundep_closure(start: Iterable[str], context: Iterable[UserC], info: TheoryInfo) -> set[str]:
    determined = set(start)
    changed = True
    while changed:
        changed = False
        for c in context:
            for det, dep in info.class_fundeps.get(c.pred, ()):
                if all(
                    v in determined
                    for i in det
                    if i < len(c.args)
                    for v in free_type_vars(c.args[i])
                ):
                    for j in dep:
                        if j < len(c.args):
                            for v in free_type_vars(c.args[j]):
                                if v not in determined:
                                    determined.add(v)
                                    changed = True
    return determined


def check_ambiguous(scheme: TypeScheme, info: TheoryInfo) -> list[str]:
    """Quantified context variables not reachable from the body type under
    the theory's functional dependencies."""
    determined = fundep_closure(free_type_vars(scheme.body), scheme.context, info)
    ctx_vars = free_vars_of(list(scheme.context))
    return [v for v in scheme.quantified if v in ctx_vars and v not in determined]


# ---------------------------------------------------------------------------
# Theory lints


@dataclass(frozen=True)
class LintWarning:
    code: str
    message: str
    nid: int = -1


def _methods_used_under_annotations(program: Program, info: TheoryInfo) -> dict[str, int]:
    """Class name -> node id of an annotated definition under which one of
    its methods is used (lexically)."""
    found: dict[str, int] = {}

    def collect(e: Expr, under: Optional[int]) -> None:
        if isinstance(e, EVar):
            if under is not None and e.name in info_method_class:
                found.setdefault(info_method_class[e.name], under)
            return
        if isinstance(e, (ELet, ELetA)):
            inner = e.nid if isinstance(e, ELetA) else under
            collect(e.rhs, inner)
            collect(e.body, under)
            return
        for c in _walk_children(e):
            collect(c, under)

    info_method_class = info.method_class
    for d in program.defs:
        collect(d.rhs, d.nid if d.ann is not None else None)
    return found


def _annotation_contexts(program: Program) -> list[tuple[UserC, int]]:
    out: list[tuple[UserC, int]] = []

    def walk(e: Expr) -> None:
        if isinstance(e, ELetA):
            out.extend((c, e.nid) for c in e.ann.context)
        for c in _walk_children(e):
            walk(c)

    for d in program.defs:
        if d.ann is not None:
            out.extend((c, d.nid) for c in d.ann.context)
        walk(d.rhs)
    return out


def _fully_functional(cls: str, info: TheoryInfo) -> bool:
    arity = info.class_arity.get(cls, 0)
    if arity <= 1:
        return True
    fds = info.class_fundeps.get(cls, ())
    for i in range(arity):
        rest = set(range(arity)) - {i}
        if not any(set(det) == {i} and rest <= set(dep) for det, dep in fds):
            return False
    return True


def lint_theory(tr: Translation) -> list[LintWarning]:
    warnings: list[LintWarning] = []
    for rule in tr.chr.theory:
        head_vars = set(rule.head_vars())
        body_vars = set(free_vars_of(list(rule.body)))
        if not body_vars <= head_vars:
            extra = ", ".join(sorted(body_vars - head_vars))
            warnings.append(
                LintWarning(
                    "not-range-restricted",
                    f"rule {rule.rid} introduces unbound body variables: {extra}",
                )
            )
    for rule in tr.chr.rules():
        if rule.simp and len(rule.heads) != 1:
            warnings.append(
                LintWarning("multi-headed-simplification", f"rule {rule.rid} is malformed")
            )
    for cls, na, nb in overlapping_instances(tr.info):
        warnings.append(
            LintWarning(
                "overlapping-instances",
                f"instances of `{cls}` have unifiable heads; the theory is not confluent",
                na,
            )
        )
    flagged: set[str] = set()
    used = _methods_used_under_annotations(tr.program, tr.info)
    for c, nid in _annotation_contexts(tr.program):
        if c.pred in tr.info.class_arity:
            used.setdefault(c.pred, nid)
    for cls, nid in sorted(used.items(), key=lambda kv: (kv[1], kv[0])):
        if not _fully_functional(cls, tr.info) and cls not in flagged:
            flagged.add(cls)
            warnings.append(
                LintWarning(
                    "not-fully-functional",
                    f"multi-parameter class `{cls}` is used under an annotation but its "
                    "parameters do not determine each other",
                    nid,
                )
            )
    return warnings


# ---------------------------------------------------------------------------
# Whole-program verdict


@dataclass
class Options:
    fuel: int = DEFAULT_FUEL
    forced_calls: bool = True
    paranoid: bool = False
    collect_traces: bool = False


@dataclass
class DefReport:
    name: str
    nid: int
    top_level: bool
    scheme: Optional[TypeScheme] = None
    env_context: tuple[UserC, ...] = ()
    scheme_failure: Optional[str] = None
    sat: Optional[SatResult] = None
    annotation: Optional[SubsumptionVerdict] = None
    warnings: list[LintWarning] = field(default_factory=list)


@dataclass
class ProgramVerdict:
    verdict: str  # "WellTyped" | "IllTyped" | "Unknown"
    defs: list[DefReport] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)  # (message, loc)
    warnings: list[LintWarning] = field(default_factory=list)
    translation: Optional[Translation] = None
    traces: dict[str, DeriveResult] = field(default_factory=dict)

    def exit_code(self) -> int:
        return {"WellTyped": 0, "IllTyped": 1, "Unknown": 2}[self.verdict]

    def report_for(self, name: str) -> DefReport:
        return next(r for r in self.defs if r.name == name)


def infer_program(program: Program, options: Optional[Options] = None) -> ProgramVerdict:
    opts = options or Options()
    out = ProgramVerdict("WellTyped")
    try:
        defclass = classify_definitions(program)
        tr = translate_program(program, defclass, forced_calls=opts.forced_calls)
    except (UnboundVariable, UnsupportedRecursion) as err:
        out.verdict = "IllTyped"
        out.errors.append((str(err), f"{err.line}:{err.col}"))
        return out
    except TranslateError as err:
        out.verdict = "IllTyped"
        out.errors.append((str(err), f"{err.line}:{err.col}"))
        return out

    out.translation = tr
    kinds = tr.function_kinds()
    out.warnings.extend(lint_theory(tr))

    unknown = False
    failed = False

    sub_verdicts = {}
    for problem in subsumption_problems(tr):
        v = check_subsumption(problem, tr.chr, kinds, opts.fuel, opts.paranoid)
        sub_verdicts[problem.name] = v
        if opts.collect_traces:
            if v.ann_result:
                out.traces[f"sub:{problem.name}:annotation"] = v.ann_result
            if v.def_result:
                out.traces[f"sub:{problem.name}:definition"] = v.def_result
        if v.verdict == "Incorrect":
            failed = True
        elif v.verdict == "Unknown":
            unknown = True

    ordered = sorted(tr.sites.values(), key=lambda s: s.nid)
    top_names = {d.name for d in program.defs}
    for site in ordered:
        report = DefReport(site.name, site.nid, site.parent is None)
        sat = None
        if site.parent is None:
            sat = check_sat(
                [UserC(tr.def_pred[site.name], (TVar("t"), TVar("l")))],
                tr.chr,
                kinds,
                opts.fuel,
                opts.paranoid,
            )
            report.sat = sat
            if opts.collect_traces:
                out.traces[f"sat:{site.name}"] = sat.result
            if sat.status == "unsatisfiable":
                failed = True
            elif sat.status == "unknown":
                unknown = True
        sr = build_scheme(
            tr.def_pred[site.name],
            tr.chr,
            kinds,
            opts.fuel,
            opts.paranoid,
            precomputed=sat.result if sat is not None else None,
        )
        report.scheme = sr.scheme
        report.env_context = sr.env_context
        report.scheme_failure = sr.failure
        if opts.collect_traces and sat is None and sr.result is not None:
            out.traces[f"scheme:{site.name}"] = sr.result
        report.annotation = sub_verdicts.get(site.name)
        schemes_to_lint = []
        if sr.scheme is not None:
            schemes_to_lint.append(sr.scheme)
        if site.annotated is not None:
            ann = site.annotated
            quant = tuple(free_vars_of([ann.type, *ann.context]))
            schemes_to_lint.append(TypeScheme(quant, ann.context, ann.type))
        ambiguous: list[str] = []
        for s in schemes_to_lint:
            for v in check_ambiguous(s, tr.info):
                if v not in ambiguous:
                    ambiguous.append(v)
        if ambiguous:
            report.warnings.append(
                LintWarning(
                    "ambiguous-type",
                    f"`{site.name}` has an ambiguous type: {', '.join(ambiguous)} "
                    "cannot be determined from the body type",
                    site.nid,
                )
            )
        out.defs.append(report)

    if failed:
        out.verdict = "IllTyped"
    elif unknown:
        out.verdict = "Unknown"
    return out
