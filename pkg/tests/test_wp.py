import pytest

from cbcforge.errors import UnknownMethod, WpError
from cbcforge.kernel import INT, SEQ, Contract
from cbcforge.prover import Invalid, Obligation, Valid, check_implication, run_statement
from cbcforge.schemas import ProverConfig
from cbcforge.syntax import parse_predicate, parse_statements
from cbcforge.wp import MethodSig, wp, wp_concrete


def valid(hyp, concl, env, cfg):
    return check_implication(Obligation("t", hyp, concl, "", env), cfg)


def test_assignment_substitutes():
    s = parse_statements("x = x + 1;")
    assert wp(s, parse_predicate("x > 0")) == parse_predicate("x + 1 > 0")


def test_sequence_goes_backwards():
    s = parse_statements("y = x; x = y + 1;")
    assert wp(s, parse_predicate("x == 5")) == parse_predicate("x + 1 == 5")


def test_selection_requires_coverage(cfg):
    s = parse_statements("choose { when (x > 0) { y = x; } }")
    w = wp(s, parse_predicate("y > 0"))
    r = valid(parse_predicate("true"), w, {"x": INT, "y": INT}, cfg)
    assert isinstance(r, Invalid)
    assert valid(parse_predicate("x > 0"), w, {"x": INT, "y": INT}, cfg) == Valid()


def test_wp_agrees_with_execution(cfg):
    s = parse_statements("if (x < 0) { y = 0 - x; } else { y = x; }")
    post = parse_predicate("y >= 0 && (y == x || y == 0 - x)")
    w = wp(s, post)
    assert valid(parse_predicate("true"), w, {"x": INT, "y": INT}, cfg) == Valid()
    for x in range(-4, 5):
        out = run_statement(s, {"x": x, "y": 0}, cfg)
        assert out["y"] == abs(x)


def test_call_uses_the_callee_contract(cfg):
    absolute = MethodSig("absolute", (("x", INT),), INT,
                         Contract(parse_predicate("true"), parse_predicate("result >= 0")))
    s = parse_statements("z = absolute(y);")
    w = wp(s, parse_predicate("z >= 0"), {"absolute": absolute})
    assert valid(parse_predicate("true"), w, {"y": INT, "z": INT}, cfg) == Valid()
    w = wp(s, parse_predicate("z > 0"), {"absolute": absolute})
    assert isinstance(valid(parse_predicate("true"), w, {"y": INT, "z": INT}, cfg), Invalid)


def test_call_results_range_over_the_bounded_domain(cfg):
    shift = MethodSig("shift", (("x", INT),), INT,
                      Contract(parse_predicate("true"), parse_predicate("result == x + 10")))
    w = wp(parse_statements("z = shift(y);"), parse_predicate("false"), {"shift": shift})
    # every result the callee may return lies outside [-4, 4]
    assert valid(parse_predicate("true"), w, {"y": INT}, cfg) == Valid()
    assert isinstance(valid(parse_predicate("true"), w, {"y": INT}, ProverConfig(int_bound=10)), Invalid)


def test_unknown_callee():
    with pytest.raises(UnknownMethod):
        wp(parse_statements("z = nope(y);"), parse_predicate("true"))


def test_loops_need_wp_concrete():
    s = parse_statements("loop_invariant k <= n; decreases n - k; while (k < n) { k = k + 1; }")
    with pytest.raises(WpError):
        wp(s, parse_predicate("k == n"))


def test_loop_side_conditions(cfg):
    s = parse_statements("loop_invariant k <= n; decreases n - k; while (k < n) { k = k + 1; }")
    w, aux = wp_concrete(s, parse_predicate("k == n"), env={"k": INT, "n": INT})
    assert w == parse_predicate("k <= n")
    assert [a.label for a in aux] == ["loop1.exit", "loop1.preserve", "loop1.variant"]
    env = {"k": INT, "n": INT}
    for a in aux:
        r = check_implication(Obligation(a.label, a.hypothesis, a.conclusion, "", {**env, **dict(a.env)}), cfg)
        assert r == Valid(), a.label


def test_non_decreasing_variant_fails(cfg):
    s = parse_statements("loop_invariant k <= n; decreases n + k; while (k < n) { k = k + 1; }")
    _, aux = wp_concrete(s, parse_predicate("k == n"), env={"k": INT, "n": INT})
    variant = next(a for a in aux if a.label == "loop1.variant")
    r = check_implication(Obligation("v", variant.hypothesis, variant.conclusion, "",
                                     {"k": INT, "n": INT, **dict(variant.env)}), cfg)
    assert isinstance(r, Invalid)


def test_nested_loops_are_numbered_in_order():
    s = parse_statements(
        "loop_invariant true; decreases n - i; while (i < n) {"
        "  loop_invariant true; decreases n - j; while (j < n) { j = j + 1; }"
        "  i = i + 1; }")
    _, aux = wp_concrete(s, parse_predicate("true"), env={"i": INT, "j": INT, "n": INT})
    labels = [a.label for a in aux]
    assert labels[:3] == ["loop1.exit", "loop1.preserve", "loop1.variant"]
    assert labels[3:] == ["loop2.exit", "loop2.preserve", "loop2.variant"]


def test_old_resolves_to_the_prestate():
    s = parse_statements("x = x + 1;")
    w, _ = wp_concrete(s, parse_predicate("x == old(x) + 1"))
    assert w == parse_predicate("x + 1 == x + 1")


def test_list_program(cfg):
    s = parse_statements("int k = 0; r = false; loop_invariant 0 <= k && k <= list.size(); "
                         "decreases list.size() - k; while (k < list.size()) { k = k + 1; }")
    env = {"k": INT, "r": "bool", "list": SEQ}
    w, aux = wp_concrete(s, parse_predicate("k == list.size()"), env=env)
    assert valid(parse_predicate("true"), w, env, cfg) == Valid()
    for a in aux:
        assert check_implication(Obligation(a.label, a.hypothesis, a.conclusion, "", {**env, **dict(a.env)}),
                                 cfg) == Valid()
