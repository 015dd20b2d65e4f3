import pytest

from cbcforge.errors import SmtError
from cbcforge.kernel import INT, SEQ
from cbcforge.prover import Obligation
from cbcforge.schemas import ProverConfig
from cbcforge.smt import emit_smt, smt_file_name, symbol
from cbcforge.syntax import parse_predicate


def ob(hyp, concl, env, ident="m.A0.assign"):
    return Obligation(ident, parse_predicate(hyp), parse_predicate(concl), "test", env)


def solve(text):
    z3 = pytest.importorskip("z3")
    s = z3.Solver()
    s.set("timeout", 10000)
    s.add(z3.parse_smt2_string(text.replace("(check-sat)\n", "")))
    return s.check(), z3


def test_script_shape():
    text = emit_smt(ob("x > 0", "x + 1 > 0", {"x": INT}))
    lines = text.splitlines()
    assert lines[0] == "; obligation m.A0.assign"
    assert "(declare-sort Seq 0)" in lines
    assert "(declare-const x Int)" in lines
    assert lines[-1] == "(check-sat)"
    assert "(assert (and (> x 0) (not (> (+ x 1) 0))))" in lines


def test_bounded_scripts_guard_every_variable():
    text = emit_smt(ob("true", "list.size() >= 0 && x == x", {"x": INT, "list": SEQ}), ProverConfig())
    assert "(assert (and (<= -4 x) (<= x 4)))" in text
    assert "(assert (Seq.bounded list))" in text
    assert "(declare-const list Seq)" in text


def test_output_is_deterministic():
    o = ob("a < b", "a + 1 <= b", {"a": INT, "b": INT})
    assert emit_smt(o) == emit_smt(o)


def test_class_types_are_not_exported():
    with pytest.raises(SmtError):
        emit_smt(ob("true", "s == s", {"s": "Shape"}))


def test_missing_type():
    with pytest.raises(SmtError):
        emit_smt(ob("true", "y > 0", {}))


def test_file_names_are_safe():
    assert smt_file_name(ob("true", "true", {}, "maxElement.B1.inst.loop1.exit")) == \
        "maxElement.B1.inst.loop1.exit.smt2"
    assert smt_file_name(ob("true", "true", {}, "a/b c")) == "a_b_c.smt2"


def test_symbols_are_quoted_when_needed():
    assert symbol("x") == "x"
    assert symbol("k'1") == "|k'1|"


def test_valid_obligation_is_unsat():
    r, z3 = solve(emit_smt(ob("x > 0", "x + 1 > 0", {"x": INT})))
    assert r == z3.unsat


def test_invalid_obligation_is_not_unsat():
    r, z3 = solve(emit_smt(ob("x > 0", "x > 1", {"x": INT})))
    assert r != z3.unsat


def test_floor_division_matches_the_prover():
    r, z3 = solve(emit_smt(ob("x == -3", "x div 2 == -2", {"x": INT})))
    assert r == z3.unsat
    r, z3 = solve(emit_smt(ob("x == 3", "x div (0 - 2) == -2", {"x": INT})))
    assert r == z3.unsat


def test_bounded_contains():
    cfg = ProverConfig(int_bound=2, max_seq_len=2, seq_elem_bound=1)
    text = emit_smt(ob("list.size() > 0", "list.contains(list.get(0))", {"list": SEQ}), cfg)
    r, z3 = solve(text)
    assert r == z3.unsat
