from dataclasses import replace

import pytest

from cbcforge.block import block_refs, block_to_method, declare_block, instantiate_in_unit, introduce_block
from cbcforge.errors import BlockError
from cbcforge.kernel import BOOL, INT, SEQ, BlockRef, Contract, LocalDecl, Seq, TrueP
from cbcforge.prover import Invalid, Valid
from cbcforge.refine import OPEN, PROVEN, apply_composition, apply_declare, check_tree, new_unit, post_hoc
from cbcforge.syntax import parse_expr, parse_predicate, parse_statements


def contract(pre, post):
    return Contract(parse_predicate(pre), parse_predicate(post))


def search_unit():
    unit = new_unit("search", [("list", SEQ), ("x", INT)], BOOL,
                    contract("true", "result == list.contains(x)"))
    return introduce_block(unit, "A0", "Find", contract("true", "result == list.contains(x)"),
                           ["list", "x", "result"], ["result"])


FIND_BODY = """
int k = 0;
result = false;
loop_invariant 0 <= k && k <= list.size() && (result ==> list.contains(x))
  && (!result ==> (forall q in indices(list): q < k ==> list.get(q) != x));
decreases list.size() - k;
while (k < list.size()) {
  if (list.get(k) == x) { result = true; }
  k = k + 1;
}
"""


def test_introduction_records_the_side_conditions(cfg):
    unit = search_unit()
    assert unit.root.rule == "block"
    assert unit.block("Find").body is None
    check = check_tree(unit, cfg)
    ids = [e.id for e in check.entries]
    assert ids == ["search.A0.block.pre", "search.A0.block.post", "search.Find.inst"]
    assert check.entries[-1].result is None
    assert check.status == OPEN


def test_instantiated_block_is_proven(cfg, small_cfg):
    unit = instantiate_in_unit(search_unit(), "Find", parse_statements(FIND_BODY))
    check = check_tree(unit, small_cfg)
    ids = [e.id for e in check.entries]
    assert "search.Find.inst" in ids
    assert "search.Find.inst.loop1.preserve" in ids
    assert all(e.result == Valid() for e in check.entries)
    assert check.status == PROVEN
    assert check.unit.block("Find").status == PROVEN
    assert all(r == Valid() for _, r in post_hoc(unit, small_cfg))


def test_block_cannot_assign_outside_its_frame():
    with pytest.raises(BlockError):
        instantiate_in_unit(search_unit(), "Find", parse_statements("x = 1; result = true;"))


def test_block_cannot_read_outside_its_frame():
    unit = new_unit("f", [("a", INT), ("b", INT)], INT, contract("true", "result == a"))
    unit = introduce_block(unit, "A0", "B", contract("true", "result == a"), ["a", "result"], ["result"])
    with pytest.raises(BlockError):
        instantiate_in_unit(unit, "B", parse_statements("result = b;"))


def test_contract_must_stay_inside_the_frame():
    unit = new_unit("f", [("a", INT), ("b", INT)], INT, contract("true", "result == a"))
    with pytest.raises(BlockError):
        introduce_block(unit, "A0", "B", contract("b > 0", "result == a"), ["a", "result"], ["result"])


def test_parameters_cannot_be_assignable():
    unit = new_unit("f", [("a", INT)], INT, contract("true", "result == a"))
    with pytest.raises(BlockError):
        introduce_block(unit, "A0", "B", contract("true", "result == a"), ["a", "result"], ["a", "result"])


def test_old_on_assignable_is_rejected():
    with pytest.raises(BlockError):
        declare_block("B", contract("true", "i == old(i) + 1"), ["i"], ["i"], {"i": INT})


def test_duplicate_block_names():
    unit = new_unit("f", [("a", INT)], INT, contract("true", "result == a"))
    unit = apply_composition(unit, "A0", parse_predicate("result == a"))
    unit = introduce_block(unit, "A1", "B", contract("true", "result == a"), ["a", "result"], ["result"])
    with pytest.raises(BlockError):
        introduce_block(unit, "A2", "B", contract("result == a", "result == a"), ["a", "result"], ["result"])


def test_wrong_body_fails_the_instantiation(cfg):
    unit = new_unit("f", [("a", INT)], INT, contract("true", "result >= a"))
    unit = introduce_block(unit, "A0", "B", contract("true", "result >= a"), ["a", "result"], ["result"])
    unit = instantiate_in_unit(unit, "B", parse_statements("result = a - 1;"))
    check = check_tree(unit, cfg)
    by_id = {e.id: e.result for e in check.entries}
    assert by_id["f.B.inst"] == Invalid((("a", -4),))
    assert check.unit.block("B").status == "failed"


def test_colliding_locals_are_renamed():
    unit = new_unit("f", [("a", INT)], INT, contract("true", "result == a"))
    unit = apply_composition(unit, "A0", parse_predicate("k == a"))
    unit = apply_declare(unit, "A1", INT, "k", parse_expr("a"))
    unit = introduce_block(unit, "A2", "B", contract("k == a", "result == a"), ["a", "k", "result"], ["result"])
    unit = instantiate_in_unit(unit, "B", parse_statements("int k = a; result = k;"))
    decl = unit.block("B")
    assert dict(decl.renaming) == {"k": "k'1"}
    assert isinstance(decl.body, Seq)
    assert decl.body.first == LocalDecl("k'1", INT, parse_expr("a"))


def test_block_as_method():
    decl = declare_block("B", contract("i > 0", "i > n"), ["i", "n"], ["i"], {"i": INT, "n": INT})
    assert decl.params == (("n", INT),)
    with pytest.raises(BlockError):
        block_to_method(decl)
    method = block_to_method(replace(decl, instantiation=parse_statements("i = n + 1;")))
    assert method.params == (("n", INT),)
    assert method.state == (("i", INT),)
    assert method.return_type == "void"


def test_nested_refs_are_found():
    s = parse_statements("loop_invariant true; decreases n - j; while (j < n) { block B2; j = j + 1; }")
    assert [r.name for r in block_refs(s)] == ["B2"]
    assert block_refs(BlockRef("X", TrueP(), TrueP())) == (BlockRef("X", TrueP(), TrueP()),)


def three_levels(b2_frame=("a", "t"), b3_assignable=("t",)):
    """f: B1 declares t and calls B2, B2 declares u and calls B3, which declares its own u."""
    unit = new_unit("f", [("a", INT)], INT, contract("true", "result == a + 3"))
    unit = introduce_block(unit, "A0", "B1", contract("true", "result == a + 3"), ["a", "result"], ["result"])
    unit = instantiate_in_unit(unit, "B1", parse_statements("int t = a; block B2; result = t;"),
                               [("B2", contract("t == a", "t == a + 3"), list(b2_frame), ["t"])])
    return instantiate_in_unit(unit, "B2", parse_statements("int u = 1; t = t + u; block B3; t = t + u;"),
                               [("B3", contract("t == a + 1", "t == a + 2"), list(b2_frame), list(b3_assignable))])


def test_three_nested_blocks_are_proven(cfg):
    unit = instantiate_in_unit(three_levels(), "B3", parse_statements("int u = t + 1; t = u;"))
    assert dict(unit.block("B3").renaming) == {"u": "u'1"}
    assert unit.block("B1").nested == ("B2",)
    assert unit.block("B2").nested == ("B3",)
    check = check_tree(unit, cfg)
    assert [e.id for e in check.entries if e.result != Valid()] == []
    assert {b.name: b.status for b in check.unit.blocks} == {"B1": PROVEN, "B2": PROVEN, "B3": PROVEN}
    assert check.status == PROVEN
    assert all(r == Valid() for _, r in post_hoc(unit, cfg))


def test_innermost_block_cannot_leak_an_assignable():
    with pytest.raises(BlockError, match="nested block B3 assigns result"):
        three_levels(b2_frame=("a", "t", "result"), b3_assignable=("t", "result"))


def test_innermost_block_stays_inside_its_frame():
    with pytest.raises(BlockError, match="not assignable"):
        instantiate_in_unit(three_levels(), "B3", parse_statements("t = t + 1; a = 0;"))
