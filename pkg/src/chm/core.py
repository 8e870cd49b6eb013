"""Types, constraints, substitutions and syntactic unification.

The type language has variables, constructors, applications and
type-level lists.  A type-level list is closed (``[[a, b]]``) or ends in
an open tail (``[[a, b | r]]``); unifying an open list against a longer
one binds the tail to the leftover suffix.  Function arrows and tuples
are ordinary constructor applications, so ``arrow(a, b)`` and
``App(App(Con("->"), a), b)`` are the same value.

Everything in this module is immutable and safe to share.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Union


# ---------------------------------------------------------------------------
# Types


class Type:
    __slots__ = ()


@dataclass(frozen=True)
class TVar(Type):
    name: str

    def __repr__(self) -> str:
        return f"TVar({self.name!r})"


@dataclass(frozen=True)
class TCon(Type):
    name: str

    def __repr__(self) -> str:
        return f"TCon({self.name!r})"


@dataclass(frozen=True)
class TApp(Type):
    fun: Type
    arg: Type


@dataclass(frozen=True)
class TList(Type):
    """Type-level list: a known prefix plus an optional open tail.

    ``tail is None`` means the list is closed.  Construct through
    :func:`tlist`, which keeps values normalized (a nested TList tail is
    merged into the prefix, and a list that is nothing but a tail *is*
    the tail).
    """

    prefix: tuple[Type, ...]
    tail: Optional[Type]


ARROW = TCon("->")
PAIR = TCon("(,)")
LIST_CON = TCon("[]")
# Carrier for the (local binders, all binders) environment pair threaded
# through every function predicate; kept distinct from user-level tuples.
ENV_PAIR = TCon("Env")

INT = TCon("Int")
BOOL = TCon("Bool")
CHAR = TCon("Char")
STRING = TCon("String")


def tlist(prefix: Iterable[Type], tail: Optional[Type] = None) -> Type:
    items = list(prefix)
    while isinstance(tail, TList):
        items.extend(tail.prefix)
        tail = tail.tail
    if not items and tail is not None:
        return tail
    return TList(tuple(items), tail)


EMPTY_LIST = tlist(())


def arrow(a: Type, b: Type) -> Type:
    return TApp(TApp(ARROW, a), b)


def arrows(args: Sequence[Type], result: Type) -> Type:
    for a in reversed(args):
        result = arrow(a, result)
    return result


def pair(a: Type, b: Type) -> Type:
    return TApp(TApp(PAIR, a), b)


def env_pair(local: Type, everything: Type) -> Type:
    return TApp(TApp(ENV_PAIR, local), everything)


def spine(t: Type) -> tuple[Type, list[Type]]:
    """Decompose nested applications into (head, argument list)."""
    args: list[Type] = []
    while isinstance(t, TApp):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


def as_binary(t: Type, con: TCon) -> Optional[tuple[Type, Type]]:
    head, args = spine(t)
    if head == con and len(args) == 2:
        return args[0], args[1]
    return None


def as_arrow(t: Type) -> Optional[tuple[Type, Type]]:
    return as_binary(t, ARROW)


def free_type_vars(t: Type, acc: Optional[list[str]] = None) -> list[str]:
    """Free variables in first-occurrence order (no duplicates)."""
    if acc is None:
        acc = []
    if isinstance(t, TVar):
        if t.name not in acc:
            acc.append(t.name)
    elif isinstance(t, TApp):
        free_type_vars(t.fun, acc)
        free_type_vars(t.arg, acc)
    elif isinstance(t, TList):
        for x in t.prefix:
            free_type_vars(x, acc)
        if t.tail is not None:
            free_type_vars(t.tail, acc)
    return acc


# ---------------------------------------------------------------------------
# Markers and constraints


class Marker(Enum):
    EMPTY = ""
    MINUS = "⊖"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EqC:
    """Equation between two types, with a marker and location history."""

    lhs: Type
    rhs: Type
    marker: Marker = Marker.EMPTY
    locs: tuple[int, ...] = ()


@dataclass(frozen=True)
class UserC:
    """User constraint: class constraint or function-call predicate."""

    pred: str
    args: tuple[Type, ...]
    marker: Marker = Marker.EMPTY
    locs: tuple[int, ...] = ()


Constraint = Union[EqC, UserC]


def is_marked(c: Constraint) -> bool:
    return c.marker is Marker.MINUS


def with_marker(c: Constraint, marker: Marker) -> Constraint:
    return replace(c, marker=marker)


def with_locs(c: Constraint, locs: tuple[int, ...]) -> Constraint:
    return replace(c, locs=locs)


def free_constraint_vars(c: Constraint, acc: Optional[list[str]] = None) -> list[str]:
    if acc is None:
        acc = []
    if isinstance(c, EqC):
        free_type_vars(c.lhs, acc)
        free_type_vars(c.rhs, acc)
    else:
        for a in c.args:
            free_type_vars(a, acc)
    return acc


def free_vars_of(items: Iterable[Union[Type, Constraint]]) -> list[str]:
    acc: list[str] = []
    for x in items:
        if isinstance(x, Type):
            free_type_vars(x, acc)
        else:
            free_constraint_vars(x, acc)
    return acc


# ---------------------------------------------------------------------------
# Type schemes


@dataclass(frozen=True)
class TypeScheme:
    """forall quantified. context => body; monotypes have both empty."""

    quantified: tuple[str, ...]
    context: tuple[UserC, ...]
    body: Type

    def __post_init__(self) -> None:
        allowed = set(free_vars_of([self.body, *self.context]))
        bad = [q for q in self.quantified if q not in allowed]
        if bad:
            raise ValueError(f"quantified variables not free in scheme: {bad}")


def monotype(t: Type) -> TypeScheme:
    return TypeScheme((), (), t)


# ---------------------------------------------------------------------------
# Substitutions


class Subst:
    """Idempotent substitution from variable names to types.

    Bindings are kept fully resolved: no variable in the domain occurs in
    any range type, so applying twice equals applying once.
    """

    __slots__ = ("m",)

    def __init__(self, mapping: Optional[dict[str, Type]] = None):
        self.m: dict[str, Type] = dict(mapping) if mapping else {}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Subst) and self.m == other.m

    def __repr__(self) -> str:
        items = ", ".join(f"{v} ↦ {type_str(t)}" for v, t in sorted(self.m.items()))
        return "{" + items + "}"

    def domain(self) -> list[str]:
        return sorted(self.m)

    def apply(self, t: Type) -> Type:
        if isinstance(t, TVar):
            return self.m.get(t.name, t)
        if isinstance(t, TCon):
            return t
        if isinstance(t, TApp):
            return TApp(self.apply(t.fun), self.apply(t.arg))
        if isinstance(t, TList):
            return tlist(
                [self.apply(x) for x in t.prefix],
                None if t.tail is None else self.apply(t.tail),
            )
        raise TypeError(f"not a type: {t!r}")

    def apply_constraint(self, c: Constraint) -> Constraint:
        if isinstance(c, EqC):
            return replace(c, lhs=self.apply(c.lhs), rhs=self.apply(c.rhs))
        return replace(c, args=tuple(self.apply(a) for a in c.args))

    def apply_scheme(self, s: TypeScheme) -> TypeScheme:
        # Quantified variables are never in an idempotent substitution's
        # domain when schemes are built from solved stores; guard anyway.
        inner = Subst({v: t for v, t in self.m.items() if v not in s.quantified})
        return TypeScheme(
            s.quantified,
            tuple(inner.apply_constraint(c) for c in s.context),
            inner.apply(s.body),
        )

    def is_idempotent(self) -> bool:
        rng_vars = free_vars_of(list(self.m.values()))
        return not any(v in self.m for v in rng_vars)


def compose(outer: Subst, inner: Subst) -> Subst:
    """apply(compose(outer, inner), t) == apply(outer, apply(inner, t))."""
    m = {v: outer.apply(t) for v, t in inner.m.items()}
    for v, t in outer.m.items():
        if v not in m:
            m[v] = t
    return Subst(m)


# ---------------------------------------------------------------------------
# Unification


class UnifyError(Exception):
    """Unification failure: constructor clash, occurs check, or a closed
    type-level list of the wrong length."""

    def __init__(self, kind: str, left: Type, right: Type):
        self.kind = kind
        self.left = left
        self.right = right
        super().__init__(f"{kind}: {type_str(left)} vs {type_str(right)}")


def _bind(s: dict[str, Type], name: str, t: Type) -> None:
    if isinstance(t, TVar) and t.name == name:
        return
    if name in free_type_vars(t):
        raise UnifyError("occurs-check", TVar(name), t)
    one = Subst({name: t})
    for v in list(s):
        s[v] = one.apply(s[v])
    s[name] = t


def _unify_lists(s: dict[str, Type], work: list, a: TList, b: TList) -> None:
    n = min(len(a.prefix), len(b.prefix))
    for x, y in zip(a.prefix[:n], b.prefix[:n]):
        work.append((x, y))
    rest_a = tlist(a.prefix[n:], a.tail)
    rest_b = tlist(b.prefix[n:], b.tail)
    if isinstance(rest_a, TList) and isinstance(rest_b, TList):
        # Normalization leaves only leftover-prefix lists or the closed
        # empty list here; at most one side still has prefix elements.
        if rest_a.prefix or rest_b.prefix:
            raise UnifyError("list-length-mismatch", a, b)
        return  # both closed and empty
    # At least one side reduced to its open tail; unify it against the
    # remainder of the other (binding the tail to the leftover suffix).
    work.append((rest_a, rest_b))


def unify(pairs: Iterable[tuple[Type, Type]], base: Optional[Subst] = None) -> Subst:
    """Most general idempotent unifier of all pairs, or raise UnifyError."""
    s: dict[str, Type] = dict(base.m) if base is not None else {}
    work = [(a, b) for a, b in pairs]
    while work:
        a, b = work.pop()
        a = Subst(s).apply(a)
        b = Subst(s).apply(b)
        if a == b:
            continue
        if isinstance(a, TVar):
            _bind(s, a.name, b)
        elif isinstance(b, TVar):
            _bind(s, b.name, a)
        elif isinstance(a, TCon) and isinstance(b, TCon):
            raise UnifyError("clash", a, b)
        elif isinstance(a, TApp) and isinstance(b, TApp):
            work.append((a.fun, b.fun))
            work.append((a.arg, b.arg))
        elif isinstance(a, TList) and isinstance(b, TList):
            _unify_lists(s, work, a, b)
        else:
            raise UnifyError("clash", a, b)
    return Subst(s)


def mgu(equations: Iterable[tuple[Type, Type]]) -> Subst:
    return unify(equations)


# ---------------------------------------------------------------------------
# One-way matching (rule heads against store constraints)


def match_types(
    patterns: Sequence[Type],
    targets: Sequence[Type],
    binding: Optional[dict[str, Type]] = None,
) -> Optional[dict[str, Type]]:
    """Match pattern types against targets; pattern variables bind, target
    variables are rigid.  Returns the extended binding or None."""
    if len(patterns) != len(targets):
        return None
    theta = dict(binding) if binding else {}
    work = list(zip(patterns, targets))
    while work:
        p, t = work.pop()
        if isinstance(p, TVar):
            seen = theta.get(p.name)
            if seen is None:
                theta[p.name] = t
            elif seen != t:
                return None
            continue
        if isinstance(p, TCon):
            if p != t:
                return None
            continue
        if isinstance(p, TApp):
            if not isinstance(t, TApp):
                return None
            work.append((p.fun, t.fun))
            work.append((p.arg, t.arg))
            continue
        if isinstance(p, TList):
            if not isinstance(t, TList):
                return None
            n = len(p.prefix)
            if len(t.prefix) < n:
                return None
            work.extend(zip(p.prefix, t.prefix[:n]))
            rest = tlist(t.prefix[n:], t.tail)
            if p.tail is None:
                if not (isinstance(rest, TList) and not rest.prefix and rest.tail is None):
                    return None
            else:
                work.append((p.tail, rest))
            continue
        return None
    return theta


# ---------------------------------------------------------------------------
# Fresh names and renaming


class NameSupply:
    """Deterministic fresh-name source.  Renamed variables keep the stem of
    the original name: renaming ``tx3`` yields ``tx3'7``."""

    __slots__ = ("counter",)

    def __init__(self, start: int = 0):
        self.counter = start

    def fresh(self, stem: str = "v") -> str:
        self.counter += 1
        root = stem.split("'", 1)[0]
        return f"{root}'{self.counter}"


def rename_vars(names: Iterable[str], avoid: set[str], supply: NameSupply) -> Subst:
    mapping: dict[str, Type] = {}
    taken = set(avoid)
    for n in names:
        if n in mapping:
            continue
        fresh = supply.fresh(n)
        while fresh in taken:
            fresh = supply.fresh(n)
        taken.add(fresh)
        mapping[n] = TVar(fresh)
    return Subst(mapping)


def rename_scheme_apart(s: TypeScheme, avoid: set[str], supply: NameSupply) -> TypeScheme:
    r = rename_vars(s.quantified, avoid, supply)
    return TypeScheme(
        tuple(r.apply(TVar(q)).name for q in s.quantified),  # type: ignore[union-attr]
        tuple(r.apply_constraint(c) for c in s.context),
        r.apply(s.body),
    )


def instantiate(s: TypeScheme, avoid: set[str], supply: NameSupply) -> tuple[list[UserC], Type]:
    fresh = rename_scheme_apart(s, avoid, supply)
    return list(fresh.context), fresh.body


# ---------------------------------------------------------------------------
# Alpha-equivalence over ordered sequences


def _alpha_walk(a: Type, b: Type, fwd: dict[str, str], bwd: dict[str, str]) -> bool:
    if isinstance(a, TVar) and isinstance(b, TVar):
        if fwd.get(a.name, b.name) != b.name or bwd.get(b.name, a.name) != a.name:
            return False
        fwd[a.name] = b.name
        bwd[b.name] = a.name
        return True
    if isinstance(a, TCon) and isinstance(b, TCon):
        return a == b
    if isinstance(a, TApp) and isinstance(b, TApp):
        return _alpha_walk(a.fun, b.fun, fwd, bwd) and _alpha_walk(a.arg, b.arg, fwd, bwd)
    if isinstance(a, TList) and isinstance(b, TList):
        if len(a.prefix) != len(b.prefix) or (a.tail is None) != (b.tail is None):
            return False
        for x, y in zip(a.prefix, b.prefix):
            if not _alpha_walk(x, y, fwd, bwd):
                return False
        if a.tail is None:
            return True
        return _alpha_walk(a.tail, b.tail, fwd, bwd)
    return False


def alpha_eq_types(xs: Sequence[Type], ys: Sequence[Type]) -> bool:
    """Variable-bijective equality of two equally-long type sequences."""
    if len(xs) != len(ys):
        return False
    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}
    return all(_alpha_walk(a, b, fwd, bwd) for a, b in zip(xs, ys))


def alpha_eq_schemes(a: TypeScheme, b: TypeScheme) -> bool:
    """Scheme equality up to a consistent renaming of all variables.

    Context order is ignored; a bijection over both quantified and free
    variables must make body and context coincide.
    """
    if len(a.quantified) != len(b.quantified) or len(a.context) != len(b.context):
        return False

    def quantifiers_line_up(fwd: dict[str, str]) -> bool:
        return sorted(fwd.get(q, "") for q in a.quantified) == sorted(b.quantified)

    def match_ctx(rest_a: list[UserC], rest_b: list[UserC], fwd, bwd) -> bool:
        if not rest_a:
            return quantifiers_line_up(fwd)
        first, *others = rest_a
        for i, cand in enumerate(rest_b):
            if cand.pred != first.pred or len(cand.args) != len(first.args):
                continue
            f2, b2 = dict(fwd), dict(bwd)
            if all(_alpha_walk(x, y, f2, b2) for x, y in zip(first.args, cand.args)):
                if match_ctx(others, rest_b[:i] + rest_b[i + 1 :], f2, b2):
                    return True
        return False

    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}
    if not _alpha_walk(a.body, b.body, fwd, bwd):
        return False
    return match_ctx(list(a.context), list(b.context), fwd, bwd)


# ---------------------------------------------------------------------------
# Pretty printing in the notation used by traces and rule dumps


def _atomic(t: Type) -> bool:
    if isinstance(t, (TVar, TCon, TList)):
        return True
    head, args = spine(t)
    return head in (PAIR, ENV_PAIR) and len(args) == 2 or head == LIST_CON and len(args) == 1


def type_str(t: Type) -> str:
    ar = as_arrow(t)
    if ar is not None:
        lhs, rhs = ar
        left = type_str(lhs)
        if as_arrow(lhs) is not None:
            left = f"({left})"
        return f"{left} → {type_str(rhs)}"
    for con in (PAIR, ENV_PAIR):
        p = as_binary(t, con)
        if p is not None:
            return f"({type_str(p[0])}, {type_str(p[1])})"
    if isinstance(t, TList):
        inner = ", ".join(type_str(x) for x in t.prefix)
        if t.tail is None:
            return f"⟦{inner}⟧"
        return f"⟦{inner} | {type_str(t.tail)}⟧" if inner else f"⟦| {type_str(t.tail)}⟧"
    head, args = spine(t)
    if head == LIST_CON and len(args) == 1:
        return f"[{type_str(args[0])}]"
    if isinstance(t, TVar) or isinstance(t, TCon):
        return t.name
    parts = [type_str(head)] + [
        type_str(a) if _atomic(a) else f"({type_str(a)})" for a in args
    ]
    return " ".join(parts)


def is_class_pred(pred: str) -> bool:
    return bool(pred) and pred[0].isupper()


def constraint_str(c: Constraint) -> str:
    if isinstance(c, EqC):
        body = f"{type_str(c.lhs)} = {type_str(c.rhs)}"
    elif is_class_pred(c.pred):
        body = " ".join(
            [c.pred] + [type_str(a) if _atomic(a) else f"({type_str(a)})" for a in c.args]
        )
    else:
        body = f"{c.pred}({', '.join(type_str(a) for a in c.args)})"
    if c.marker is Marker.MINUS:
        # class constraints read better as (Erk a)⊖, calls as f(t, l)⊖
        if isinstance(c, UserC) and is_class_pred(c.pred):
            return f"({body})⊖"
        return f"{body}⊖"
    return body


def scheme_str(s: TypeScheme) -> str:
    parts = []
    if s.quantified:
        parts.append("∀" + ", ".join(s.quantified) + ".")
    if s.context:
        ctx = ", ".join(constraint_str(c) for c in s.context)
        parts.append(f"({ctx}) ⇒" if len(s.context) > 1 else f"{ctx} ⇒")
    parts.append(type_str(s.body))
    return " ".join(parts)
