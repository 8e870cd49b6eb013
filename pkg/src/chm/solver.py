"""Marked CHR derivation engine.

A store holds user constraints (with markers and location histories) and
an incrementally maintained most general unifier of all equations seen so
far.  Rule heads are matched one-way against unifier-normalized store
constraints; rule bodies inherit the ⊖ marker whenever a matched head
carries it.  Two extra derivation steps keep recursion finite: cycle
removal deletes a later marked copy of a call predicate that already
occurred, and the monomorphic-recursion step collapses copies of an
unannotated recursive call that originate from the same source location,
equating their type components.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

from .core import (
    Constraint,
    EqC,
    Marker,
    NameSupply,
    Subst,
    TVar,
    UnifyError,
    UserC,
    constraint_str,
    free_constraint_vars,
    match_types,
    unify,
)
from .translate import ChrProgram, ChrRule

DEFAULT_FUEL = 10_000


@dataclass
class StepEntry:
    kind: str  # "rule" | "ccr" | "mono"
    rule_id: Optional[str]
    matched: tuple[tuple[int, Constraint], ...]  # heads (or removal partners)
    consumed: tuple[tuple[int, Constraint], ...]  # removed from the store
    produced: tuple[tuple[int, Constraint], ...]
    snapshot: str


class Store:
    """Constraint store: live user constraints, an archive of everything
    that ever entered, accumulated equations and their unifier."""

    def __init__(self) -> None:
        self.live: dict[int, UserC] = {}
        self.archive: dict[int, UserC] = {}  # consumed or removed, by id
        self.by_pred: dict[str, list[int]] = {}
        self.eqs: list[tuple[int, EqC]] = []
        self.phi = Subst()
        self.inconsistent: Optional[tuple[EqC, UnifyError]] = None
        self.next_id = 0
        self.supply = NameSupply()
        self.vars: set[str] = set()

    def add(self, c: Constraint) -> int:
        cid = self.next_id
        self.next_id += 1
        self.vars.update(free_constraint_vars(c))
        if isinstance(c, EqC):
            self.eqs.append((cid, c))
            if self.inconsistent is None:
                try:
                    self.phi = unify([(c.lhs, c.rhs)], base=self.phi)
                except UnifyError as err:
                    self.inconsistent = (c, err)
        else:
            self.live[cid] = c
            self.by_pred.setdefault(c.pred, []).append(cid)
        return cid

    def remove(self, cid: int) -> UserC:
        c = self.live.pop(cid)
        self.archive[cid] = c
        return c

    def normalized(self, c: Constraint) -> Constraint:
        return self.phi.apply_constraint(c)

    def earlier_with(self, pred: str, before: int, marker: Optional[Marker] = None,
                     exact_locs: Optional[tuple[int, ...]] = None) -> Optional[tuple[int, UserC]]:
        """Earliest constraint of this predicate introduced before `before`
        (live, consumed or removed), filtered by marker and, optionally, by
        an exact location history."""
        for cid in self.by_pred.get(pred, ()):
            if cid >= before:
                return None
            c = self.live.get(cid) or self.archive.get(cid)
            if c is None:
                continue
            if marker is not None and c.marker is not marker:
                continue
            if exact_locs is not None and c.locs != exact_locs:
                continue
            return cid, c
        return None

    def live_constraints(self) -> list[tuple[int, UserC]]:
        return sorted(self.live.items())

    def final_constraints(self) -> list[Constraint]:
        """Live user constraints plus all equations, unifier-normalized."""
        out: list[Constraint] = [self.normalized(c) for _, c in self.live_constraints()]
        out.extend(self.normalized(e) for _, e in self.eqs)
        return out

    def signature(self) -> str:
        parts = [constraint_str(self.normalized(c)) for _, c in self.live_constraints()]
        parts.append(repr(self.phi))
        digest = hashlib.sha1("|".join(parts).encode()).hexdigest()
        return digest[:12]


class Derivation:
    """One derivation: a store, a propagation history and a trace."""

    def __init__(
        self,
        initial: Iterable[Constraint],
        rules: Union[ChrProgram, Sequence[ChrRule]],
        function_kinds: Optional[dict[str, str]] = None,
        paranoid: bool = False,
    ):
        rule_list = list(rules.rules() if isinstance(rules, ChrProgram) else rules)
        # simplification before propagation, program order within each group
        self.rules = sorted(rule_list, key=lambda r: 0 if r.simp else 1)
        self.function_kinds = function_kinds or {}
        self.history: set[tuple[str, tuple[int, ...]]] = set()
        self.store = Store()
        self.trace: list[StepEntry] = []
        self.paranoid = paranoid
        for c in initial:
            self.store.add(c)

    # -- rule application -------------------------------------------------

    def _candidates(self, pred: str) -> list[int]:
        return [cid for cid in self.store.by_pred.get(pred, ()) if cid in self.store.live]

    def _match_heads(self, rule: ChrRule, combo: tuple[int, ...]) -> Optional[dict]:
        theta: Optional[dict] = {}
        for head, cid in zip(rule.heads, combo):
            target = self.store.normalized(self.store.live[cid])
            assert isinstance(target, UserC)
            theta = match_types(head.args, target.args, theta)
            if theta is None:
                return None
        return theta

    def _instantiate_body(self, rule: ChrRule, theta: dict) -> list[Constraint]:
        local = [v for v in rule.all_vars() if v not in theta]
        ren: dict[str, TVar] = {}
        for v in local:
            fresh = self.store.supply.fresh(v)
            while fresh in self.store.vars:
                fresh = self.store.supply.fresh(v)
            ren[v] = TVar(fresh)
        s = Subst({**theta, **ren})
        return [s.apply_constraint(c) for c in rule.body]

    def _find(self) -> Optional[tuple[ChrRule, tuple[int, ...], dict]]:
        for rule in self.rules:
            lists = [self._candidates(h.pred) for h in rule.heads]
            if any(not l for l in lists):
                continue
            for combo in itertools.product(*lists):
                if len(set(combo)) != len(combo):
                    continue
                if not rule.simp:
                    key = (rule.rid, tuple(sorted(combo)))
                    if key in self.history:
                        continue
                theta = self._match_heads(rule, combo)
                if theta is None:
                    continue
                return rule, combo, theta
        return None

    def step(self) -> Optional[StepEntry]:
        """Apply the first applicable rule under the deterministic strategy,
        or return None when the derivation is stuck."""
        if self.store.inconsistent is not None:
            return None
        found = self._find()
        if found is None:
            return None
        return self._apply(*found)

    def _apply(self, rule: ChrRule, combo: tuple[int, ...], theta: dict) -> StepEntry:
        matched = [(cid, self.store.live[cid]) for cid in combo]
        any_marked = any(c.marker is Marker.MINUS for _, c in matched)
        head_locs = tuple(loc for _, c in matched for loc in c.locs)
        consumed: tuple[tuple[int, Constraint], ...] = ()
        if rule.simp:
            consumed = ((combo[0], self.store.remove(combo[0])),)
        else:
            self.history.add((rule.rid, tuple(sorted(combo))))
        produced = []
        for b in self._instantiate_body(rule, theta):
            marker = Marker.MINUS if any_marked or b.marker is Marker.MINUS else Marker.EMPTY
            c2 = replace(b, marker=marker, locs=head_locs + b.locs)
            cid = self.store.add(c2)
            produced.append((cid, c2))
            if self.store.inconsistent is not None:
                break
        if self.paranoid:
            self._paranoid_check()
        entry = StepEntry(
            "rule", rule.rid, tuple(matched), consumed, tuple(produced),
            self.store.signature(),
        )
        self.trace.append(entry)
        return entry

    def _paranoid_check(self) -> None:
        if self.store.inconsistent is not None:
            return
        full = unify([(e.lhs, e.rhs) for _, e in self.store.eqs])
        for _, e in self.store.eqs:
            if self.store.phi.apply(e.lhs) != self.store.phi.apply(e.rhs):
                raise AssertionError("incremental unifier does not solve the equations")
            if full.apply(e.lhs) != full.apply(e.rhs):
                raise AssertionError("recomputed unifier does not solve the equations")
        if not self.store.phi.is_idempotent():
            raise AssertionError("incremental unifier is not idempotent")

    # -- cycle removal -----------------------------------------------------

    def ccr(self) -> list[StepEntry]:
        """Delete a later marked copy of a call predicate that already
        occurred marked earlier in the derivation.  Such copies come from
        re-imported surrounding context; anything their expansion would
        contribute is a renamed copy of constraints already present."""
        entries = []
        for cid, c in self.store.live_constraints():
            if c.pred not in self.function_kinds or c.marker is not Marker.MINUS:
                continue
            earlier = self.store.earlier_with(c.pred, cid, marker=Marker.MINUS)
            if earlier is None:
                continue
            self.store.remove(cid)
            entry = StepEntry(
                "ccr", None, (earlier,), ((cid, c),), (), self.store.signature()
            )
            self.trace.append(entry)
            entries.append(entry)
        return entries

    def mono(self) -> list[StepEntry]:
        """Collapse a copy of an unannotated recursive call produced by
        expanding that same call: its location history extends the earlier
        call's history by exactly one source location.  The later copy is
        removed and the type components are equated; the environment
        components are left alone (they are exact at every use site).
        Copies with unrelated histories are different calls and stay."""
        entries = []
        for cid, c in self.store.live_constraints():
            if self.function_kinds.get(c.pred) != "MRF" or not c.locs:
                continue
            earlier = self.store.earlier_with(
                c.pred, cid, marker=c.marker, exact_locs=c.locs[:-1]
            )
            if earlier is None:
                continue
            _, e = earlier
            self.store.remove(cid)
            eq = EqC(c.args[0], e.args[0], marker=c.marker, locs=e.locs + c.locs)
            eq_id = self.store.add(eq)
            entry = StepEntry(
                "mono", None, (earlier,), ((cid, c),), ((eq_id, eq),),
                self.store.signature(),
            )
            self.trace.append(entry)
            entries.append(entry)
            if self.store.inconsistent is not None:
                break
        return entries

    def cycle_removal(self) -> None:
        while self.store.inconsistent is None:
            if not (self.mono() or self.ccr()):
                break

    # -- driver ------------------------------------------------------------

    def run(self, fuel: int = DEFAULT_FUEL) -> str:
        """Derive to a final store.  Returns "final", "inconsistent" or
        "fuel"; cycle removal runs to fixpoint before every rule step."""
        while True:
            if self.store.inconsistent is not None:
                return "inconsistent"
            self.cycle_removal()
            if self.store.inconsistent is not None:
                return "inconsistent"
            found = self._find()
            if found is None:
                return "final"
            if fuel <= 0:
                return "fuel"
            self._apply(*found)
            fuel -= 1


@dataclass
class DeriveResult:
    status: str  # "final" | "inconsistent" | "fuel"
    store: Store
    trace: list[StepEntry]

    @property
    def phi(self) -> Subst:
        return self.store.phi


def derive(
    initial: Iterable[Constraint],
    rules: Union[ChrProgram, Sequence[ChrRule]],
    function_kinds: Optional[dict[str, str]] = None,
    fuel: int = DEFAULT_FUEL,
    paranoid: bool = False,
) -> DeriveResult:
    d = Derivation(initial, rules, function_kinds, paranoid=paranoid)
    status = d.run(fuel)
    return DeriveResult(status, d.store, d.trace)


# ---------------------------------------------------------------------------
# Trace rendering


def _c_strs(pairs: Iterable[tuple[int, Constraint]]) -> str:
    return ", ".join(f"#{cid} {constraint_str(c)}" for cid, c in pairs)


def trace_lines(result: DeriveResult) -> list[str]:
    lines = []
    for entry in result.trace:
        label = {"rule": entry.rule_id, "ccr": "CCR", "mono": "Mono"}[entry.kind]
        parts = [f"⤳_{label}"]
        if entry.consumed:
            parts.append(f"-[{_c_strs(entry.consumed)}]")
        if entry.produced:
            parts.append(f"+[{_c_strs(entry.produced)}]")
        parts.append(f"@{entry.snapshot}")
        lines.append(" ".join(parts))
    lines.append(f"result: {result.status}")
    if result.store.inconsistent is not None:
        eq, err = result.store.inconsistent
        lines.append(f"inconsistent: {constraint_str(eq)} ({err})")
    return lines
