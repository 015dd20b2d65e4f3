import pytest

from cbcforge.errors import RefinementError
from cbcforge.kernel import INT, BoolLit, Contract, IntLit, Seq, TrueP, Var
from cbcforge.prover import Invalid, Valid
from cbcforge.refine import (
    FAILED, OPEN, PROVEN, apply_assignment, apply_composition, apply_declare, apply_method_call, apply_repetition,
    apply_selection, apply_skip, apply_strengthen_post, apply_weaken_pre, check_tree, extract_program, new_unit,
    post_hoc, render_program, scope_at,
)
from cbcforge.syntax import parse_expr, parse_predicate
from cbcforge.wp import MethodSig

ABS_POST = "result >= 0 && (result == x || result == 0 - x)"


def absolute_unit(second_branch="0 - x"):
    unit = new_unit("absolute", [("x", INT)], INT, Contract(TrueP(), parse_predicate(ABS_POST)))
    unit = apply_selection(unit, "A0", [parse_expr("x >= 0"), parse_expr("x < 0")])
    unit = apply_assignment(unit, "A1", "result", Var("x"))
    return apply_assignment(unit, "A2", "result", parse_expr(second_branch))


def test_new_unit_is_one_open_node():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    assert unit.root.id == "A0"
    assert unit.root.is_open
    assert unit.next_index == 1


def test_children_are_numbered_in_order():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    unit = apply_composition(unit, "A0", parse_predicate("true"))
    assert [c.id for c in unit.root.children] == ["A1", "A2"]
    unit = apply_selection(unit, "A2", [parse_expr("x > 0"), parse_expr("x <= 0")])
    assert [c.id for c in unit.node("A2").children] == ["A3", "A4"]
    assert unit.next_index == 5


def test_refining_a_node_twice_is_rejected():
    unit = absolute_unit()
    with pytest.raises(RefinementError):
        apply_skip(unit, "A1")


def test_unknown_node_is_rejected():
    with pytest.raises(RefinementError):
        apply_skip(absolute_unit(), "A9")


def test_parameters_are_read_only():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    with pytest.raises(RefinementError):
        apply_assignment(unit, "A0", "x", IntLit(1))


def test_assignment_is_type_checked():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    with pytest.raises(RefinementError):
        apply_assignment(unit, "A0", "result", BoolLit(True))
    with pytest.raises(RefinementError):
        apply_assignment(unit, "A0", "y", IntLit(1))


def test_selection_needs_a_guard():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    with pytest.raises(RefinementError):
        apply_selection(unit, "A0", [])


def test_absolute_is_proven(cfg):
    check = check_tree(absolute_unit(), cfg)
    assert [e.id for e in check.entries] == ["absolute.A0.cover", "absolute.A1.assign", "absolute.A2.assign"]
    assert all(e.result == Valid() for e in check.entries)
    assert check.status == PROVEN


def test_wrong_branch_gives_a_counterexample(cfg):
    check = check_tree(absolute_unit(second_branch="x"), cfg)
    failed = [e for e in check.entries if not isinstance(e.result, Valid)]
    assert [e.id for e in failed] == ["absolute.A2.assign"]
    assert failed[0].result == Invalid((("x", -4),))
    assert check.status == FAILED
    assert check.unit.node("A1").status == PROVEN


def test_open_nodes_keep_the_tree_open(cfg):
    unit = new_unit("absolute", [("x", INT)], INT, Contract(TrueP(), parse_predicate(ABS_POST)))
    unit = apply_selection(unit, "A0", [parse_expr("x >= 0"), parse_expr("x < 0")])
    unit = apply_assignment(unit, "A1", "result", Var("x"))
    check = check_tree(unit, cfg)
    open_entries = [e for e in check.entries if e.result is None]
    assert [e.id for e in open_entries] == ["absolute.A2.abstract"]
    assert check.status == OPEN


def test_declaration_is_visible_to_the_second_statement(cfg):
    unit = new_unit("twice", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == 2 * x")))
    unit = apply_composition(unit, "A0", parse_predicate("y == x + x"))
    assert "y" not in scope_at(unit, "A2")
    unit = apply_declare(unit, "A1", INT, "y", parse_expr("x + x"))
    assert scope_at(unit, "A2")["y"] == INT
    assert "y" not in scope_at(unit, "A1")
    unit = apply_assignment(unit, "A2", "result", Var("y"))
    assert check_tree(unit, cfg).status == PROVEN


def test_redeclaring_is_rejected():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    with pytest.raises(RefinementError):
        apply_declare(unit, "A0", INT, "x", IntLit(0))


def test_weaken_and_strengthen(cfg):
    unit = new_unit("g", [("x", INT)], INT, Contract(parse_predicate("x >= 0"), parse_predicate("result >= 0")))
    unit = apply_weaken_pre(unit, "A0", parse_predicate("true"))
    unit = apply_strengthen_post(unit, "A1", parse_predicate("result == 0"))
    unit = apply_assignment(unit, "A2", "result", IntLit(0))
    check = check_tree(unit, cfg)
    assert [e.id for e in check.entries] == ["g.A0.weaken", "g.A1.strengthen", "g.A2.assign"]
    assert check.status == PROVEN


def test_strengthening_to_a_weaker_post_fails(cfg):
    unit = new_unit("g", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result >= 0")))
    unit = apply_strengthen_post(unit, "A0", parse_predicate("result >= -1"))
    unit = apply_assignment(unit, "A1", "result", IntLit(-1))
    check = check_tree(unit, cfg)
    by_id = {e.id: e.result for e in check.entries}
    assert by_id["g.A0.strengthen"] == Invalid((("result", -1),))
    assert by_id["g.A1.assign"] == Valid()


def test_method_call(cfg):
    absolute = MethodSig("absolute", (("x", INT),), INT, Contract(TrueP(), parse_predicate(ABS_POST)))
    unit = new_unit("magnitude", [("y", INT)], INT, Contract(TrueP(), parse_predicate("result >= 0")))
    unit = apply_method_call(unit, "A0", absolute, [Var("y")], "result")
    check = check_tree(unit, cfg, {"absolute": absolute})
    assert [e.id for e in check.entries] == ["magnitude.A0.call.pre", "magnitude.A0.call.post"]
    assert check.status == PROVEN
    with pytest.raises(RefinementError):
        apply_method_call(new_unit("m", [("y", INT)], INT, Contract(TrueP(), TrueP())), "A0", absolute, [], "result")


def sum_unit():
    post = parse_predicate("result == n * (n + 1) div 2")
    unit = new_unit("sumTo", [("n", INT)], INT, Contract(parse_predicate("n >= 0"), post))
    unit = apply_composition(unit, "A0", parse_predicate("n >= 0 && i == 0 && result == 0"))
    unit = apply_composition(unit, "A1", parse_predicate("n >= 0 && i == 0"))
    unit = apply_declare(unit, "A3", INT, "i", IntLit(0))
    unit = apply_assignment(unit, "A4", "result", IntLit(0))
    unit = apply_repetition(unit, "A2", parse_predicate("0 <= i && i <= n && result == i * (i + 1) div 2"),
                            parse_expr("n - i"), parse_expr("i < n"))
    return unit


def test_variant_waits_for_a_concrete_body(cfg):
    check = check_tree(sum_unit(), cfg)
    by_id = {e.id: e for e in check.entries}
    assert by_id["sumTo.A2.variant"].result is None
    assert by_id["sumTo.A2.entry"].result == Valid()
    assert by_id["sumTo.A2.exit"].result == Valid()
    assert check.status == OPEN


def test_loop_is_proven_once_the_body_is_refined(cfg):
    unit = sum_unit()
    unit = apply_composition(unit, "A5", parse_predicate("0 <= i && i < n && result == (i + 1) * (i + 2) div 2"))
    unit = apply_assignment(unit, "A6", "result", parse_expr("result + i + 1"))
    unit = apply_assignment(unit, "A7", "i", parse_expr("i + 1"))
    check = check_tree(unit, cfg)
    assert all(e.result == Valid() for e in check.entries), [e for e in check.entries if e.result != Valid()]
    assert "sumTo.A2.variant" in {e.id for e in check.entries}
    assert check.status == PROVEN
    assert all(r == Valid() for _, r in post_hoc(check.unit, cfg))
    text = render_program(unit)
    assert "while (i < n) {" in text
    assert "int i = 0;" in text


def test_extracted_program_keeps_holes():
    unit = new_unit("f", [("x", INT)], INT, Contract(TrueP(), parse_predicate("result == x")))
    unit = apply_composition(unit, "A0", parse_predicate("true"))
    program = extract_program(unit)
    assert isinstance(program, Seq)
    with pytest.raises(RefinementError):
        post_hoc(unit)
