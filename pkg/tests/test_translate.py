import pytest

from chm.core import (
    BOOL,
    INT,
    ENV_PAIR,
    EqC,
    Marker,
    TList,
    TVar,
    UserC,
    alpha_eq_types,
    arrow,
    as_binary,
    free_vars_of,
    tlist,
)
from chm.surface import classify_definitions, definition_sites, parse
from chm.translate import (
    ChrProgram,
    ChrRule,
    TOP_PRED,
    TranslateError,
    gen_constraints,
    gen_rules,
    insert_forced_calls,
    rule_str,
    translate_program,
    translate_theory,
)


def theory_of(src):
    return translate_theory(parse(src))


def test_instance_becomes_simplification_to_true():
    rules, _ = theory_of("class Foo a b; instance Foo Int b;")
    (rule,) = [r for r in rules if r.origin[0] == "instance"]
    assert rule.simp
    assert rule.heads == (UserC("Foo", (INT, TVar("b"))),)
    assert rule.body == ()
    assert rule_str(rule) == "Foo Int b ⇔ True"


def test_superclass_becomes_propagation():
    rules, _ = theory_of("class Eq a; class (Eq a) => Ord a;")
    (rule,) = [r for r in rules if r.rid == "Ord/super"]
    assert not rule.simp
    assert rule.heads == (UserC("Ord", (TVar("a"),)),)
    assert [c.pred for c in rule.body] == ["Eq"]


def test_class_without_instances_or_supers_contributes_nothing():
    rules, _ = theory_of("class Eq a where { eq :: a -> a -> Bool };")
    assert rules == []


def test_instance_context_becomes_rule_body():
    rules, _ = theory_of("class Eq a; instance (Eq a) => Eq [a];")
    (rule,) = [r for r in rules if r.origin[0] == "instance"]
    assert rule.simp and [c.pred for c in rule.body] == ["Eq"]


def test_fundep_propagation_rules():
    rules, info = theory_of("class Rec r l a | r l -> a;")
    (rule,) = [r for r in rules if r.rid.startswith("Rec/fd")]
    assert not rule.simp and len(rule.heads) == 2
    h1, h2 = rule.heads
    # determining positions shared, determined position distinct
    assert h1.args[0] == h2.args[0] and h1.args[1] == h2.args[1]
    assert h1.args[2] != h2.args[2]
    assert rule.body == (EqC(h1.args[2], h2.args[2], locs=rule.body[0].locs),)


def test_method_scheme_includes_class_constraint():
    _, info = theory_of("class Eq a where { eq :: a -> a -> Bool };")
    s = info.method_schemes["eq"]
    assert [c.pred for c in s.context] == ["Eq"]
    assert s.quantified == ("a",)


def test_arity_mismatch_rejected():
    with pytest.raises(TranslateError):
        theory_of("class Foo a b; instance Foo Int;")
    with pytest.raises(TranslateError):
        theory_of("class Foo a; class (Foo a b) => Bar a b;")
    with pytest.raises(TranslateError):
        theory_of("instance Foo Int;")


# -- constraint generation -----------------------------------------------------


def _setup(src):
    p = parse(src)
    dc = classify_definitions(p)
    from chm.translate import translate_theory

    theory, info = translate_theory(p)
    return p, dc, info


def test_var_rule_for_lambda_binder():
    p, dc, info = _setup("g y = y;")
    body = p.defs[0].rhs.body  # inside \y -> …
    out = gen_constraints(p, dc, info, body, [("y", "tx1")])
    (eq,) = out.constraints
    assert eq == EqC(out.result_type, TVar("tx1"), locs=eq.locs)


def test_var_rule_for_function_emits_closed_local_list():
    p, dc, info = _setup("g y = let { f x = x } in f;")
    use = p.defs[0].rhs.body.body  # let body: the use of f
    out = gen_constraints(p, dc, info, use, [("y", "tx1")])
    call, leq = out.constraints
    assert call.pred == "f" and call.args[0] == out.result_type
    local, lg = as_binary(leq.rhs, ENV_PAIR)
    assert local == tlist([TVar("tx1")])  # closed at the use site
    assert isinstance(lg, TVar)  # program-wide component left open


def test_gen_constraints_is_deterministic():
    p, dc, info = _setup("g y = let { f x = x } in (f True, f y);")
    e = p.defs[0].rhs
    out1 = gen_constraints(p, dc, info, e, [])
    out2 = gen_constraints(p, dc, info, e, [])
    assert out1.constraints == out2.constraints
    assert out1.result_type == out2.result_type


# -- rule generation -------------------------------------------------------------


def _rules(src, forced=False):
    p = parse(src)
    dc = classify_definitions(p)
    tr = translate_program(p, dc, forced_calls=forced)
    return p, tr


def rule_named(tr, rid):
    return next(r for r in tr.chr.generated if r.rid == rid)


def test_definition_rule_shape():
    p, tr = _rules("g y = let { f x = x } in (f True, f y);")
    f_rule = rule_named(tr, "f")
    # head is exactly f(t, l)
    assert f_rule.heads == (UserC("f", (TVar("t"), TVar("l"))),)
    assert sorted(set(f_rule.head_vars())) == ["l", "t"]
    # body carries the marked call to the surrounding definition
    parents = [c for c in f_rule.body if isinstance(c, UserC) and c.pred == "g"]
    assert len(parents) == 1 and parents[0].marker is Marker.MINUS
    assert parents[0].args[1] == TVar("l")
    # the definition-site local list is open-tailed and starts with y's var
    leq = next(
        c
        for c in f_rule.body
        if isinstance(c, EqC) and c.lhs == TVar("l") and as_binary(c.rhs, ENV_PAIR)
    )
    local, lt = as_binary(leq.rhs, ENV_PAIR)
    assert isinstance(local, TList) and local.prefix[0] == TVar("tx1")
    assert local.tail is not None
    # the program-wide list is closed and identical across rules
    assert lt == tlist([TVar(v) for v in p.lt_order])
    g_rule = rule_named(tr, "g")
    g_leq = next(
        c
        for c in g_rule.body
        if isinstance(c, EqC) and c.lhs == TVar("l") and as_binary(c.rhs, ENV_PAIR)
    )
    assert as_binary(g_leq.rhs, ENV_PAIR)[1] == lt


def test_top_level_parent_is_trivial_rule():
    p, tr = _rules("g y = y;")
    g_rule = rule_named(tr, "g")
    tops = [c for c in g_rule.body if isinstance(c, UserC) and c.pred == TOP_PRED]
    assert len(tops) == 1 and tops[0].marker is Marker.MINUS
    top_rule = next(r for r in tr.chr.init if r.rid == TOP_PRED)
    assert top_rule.simp and top_rule.body == ()


def test_annotated_definition_gets_two_rules():
    p, tr = _rules(
        "class Erk a where { erk :: a };"
        "class Foo a where { foo :: a };"
        "f = (erk, let { g :: Foo a => a; g = foo } in g);"
    )
    ga = rule_named(tr, "g_a")
    g = rule_named(tr, "g")
    # annotation rule: t equated to the annotation, its context added, and
    # the marked call to the parent
    assert any(isinstance(c, EqC) and c.lhs == TVar("t") for c in ga.body)
    assert ["Foo"] == [c.pred for c in ga.body if isinstance(c, UserC) and c.pred == "Foo"]
    assert any(
        isinstance(c, UserC) and c.pred == "f" and c.marker is Marker.MINUS
        for c in ga.body
    )
    # definition rule calls the annotation rule and keeps the inferred body
    assert any(isinstance(c, UserC) and c.pred == "g_a" for c in g.body)
    assert any(isinstance(c, UserC) and c.pred == "foo" for c in g.body)
    assert not any(
        isinstance(c, UserC) and c.pred == "f" for c in g.body
    )  # only g_a reaches the context


def test_annotated_recursive_use_goes_through_annotation_rule():
    p, tr = _rules("f y = let { g :: Bool; g = const y g } in 'a';")
    g = rule_named(tr, "g")
    by_pred = [c.pred for c in g.body if isinstance(c, UserC)]
    assert by_pred.count("g_a") == 2  # the structural call plus the recursive use
    assert "g" not in by_pred


def test_every_user_constraint_names_a_known_predicate():
    src = (
        "class Eq a where { eq :: a -> a -> Bool };"
        "g y = let { f x = eq x y } in f True;"
    )
    p, tr = _rules(src, forced=True)
    known = (
        {r.heads[0].pred for r in tr.chr.init}
        | set(tr.def_pred.values())
        | set(tr.ann_pred.values())
        | set(tr.info.class_arity)
    )
    for rule in tr.chr.generated:
        for c in rule.body:
            if isinstance(c, UserC):
                assert c.pred in known


def test_rule_local_variables_are_rule_local():
    # variables other than t, l, and the shared binder variables must not
    # repeat across generated rules
    p, tr = _rules("g y = let { f x = x } in (f True, f y);")
    shared = {"t", "l"} | set(p.lt_order)
    seen: dict[str, str] = {}
    for rule in tr.chr.generated:
        for v in rule.all_vars():
            if v in shared:
                continue
            assert seen.setdefault(v, rule.rid) == rule.rid


# -- forced calls ---------------------------------------------------------------


def test_forced_call_added_for_uncalled_nested_definition():
    p, tr0 = _rules("f y = let { g :: Bool; g = y } in 'a';", forced=False)
    with_calls = insert_forced_calls(tr0.chr, p)
    f_rule = next(r for r in with_calls.generated if r.rid == "f")
    forced = [c for c in f_rule.body if isinstance(c, UserC) and c.pred == "g"]
    assert len(forced) == 1
    assert forced[0].marker is Marker.MINUS
    assert forced[0].args[1] == TVar("l")  # the parent's own l


def test_forced_calls_noop_when_everything_is_called():
    p, tr0 = _rules("f y = let { g :: Bool; g = y } in const 'a' g;", forced=False)
    assert insert_forced_calls(tr0.chr, p) == tr0.chr


def test_forced_call_on_occurs_check_example():
    p, tr0 = _rules("f x = let { g = x x } in x;", forced=False)
    with_calls = insert_forced_calls(tr0.chr, p)
    f_rule = next(r for r in with_calls.generated if r.rid == "f")
    assert any(isinstance(c, UserC) and c.pred == "g" for c in f_rule.body)


def test_chr_program_rejects_duplicate_rule_ids():
    r = ChrRule("x", (UserC("x", (TVar("t"), TVar("l"))),), True, (), ("def", "x"))
    with pytest.raises(ValueError):
        ChrProgram((), (r, r), ())
