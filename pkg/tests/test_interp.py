from itertools import product

import pytest

from cbcforge.calculus import TraitTable
from cbcforge.errors import FuelExhausted, StuckError
from cbcforge.interp import NIL, evaluate, is_value, list_items, list_value, python_value, show_value, step
from cbcforge.kernel import Call, IntLit, New, SeqLit, Var
from cbcforge.syntax import parse_expr, parse_traits, show_expr
from cbcforge.traits import flatten_table, type_expr
from tests.conftest import FIXTURES

LISTS = [list(xs) for n in range(1, 4) for xs in product(range(-2, 3), repeat=n)]


@pytest.fixture(scope="module")
def table():
    decls = TraitTable()
    for path in sorted((FIXTURES / "traits").iterdir()):
        decls = decls.merged(parse_traits(path.read_text(), str(path)))
    return flatten_table(decls)


def call(cls, method, *args, fields=()):
    return Call(New(cls, tuple(fields)), method, tuple(args))


def test_values():
    assert is_value(IntLit(3))
    assert is_value(list_value([1, 2]))
    assert not is_value(Call(NIL, "size", ()))
    assert list_items(list_value([1, 2])) == [IntLit(1), IntLit(2)]
    assert show_value(list_value([3, 1])) == "[3, 1]"
    assert python_value(list_value([3, 1])) == [3, 1]


def test_max_element_on_small_lists(table):
    for xs in LISTS:
        v = evaluate(table, call("MaxE", "maxElement", list_value(xs)))
        assert v == IntLit(max(xs)), xs


def test_min_element_on_small_lists(table):
    for xs in LISTS:
        v = evaluate(table, call("MinEClass", "minElement", list_value(xs)))
        assert v == IntLit(min(xs)), xs


def test_list_literals_evaluate_to_cons_cells(table):
    v = evaluate(table, call("MaxE", "maxElement", SeqLit((IntLit(4), IntLit(7)))))
    assert v == IntLit(7)


def test_getters_read_constructor_fields(table):
    assert evaluate(table, call("Pair", "sum", fields=(IntLit(1), IntLit(2)))) == IntLit(3)
    assert evaluate(table, call("Pair", "larger", fields=(IntLit(4), IntLit(9)))) == IntLit(9)


def test_dispatch_through_an_interface(table):
    square = New("Square", (IntLit(3),))
    assert evaluate(table, call("Measurer", "twice", square, IntLit(2))) == IntLit(36)


def test_parsed_expression(table):
    assert evaluate(table, parse_expr("new MaxE().maxElement([2, 9, 4])")) == IntLit(9)
    assert evaluate(table, parse_expr("if (1 < 2) {10 div 3} else {0}")) == IntLit(3)


def test_fuel_runs_out(table):
    with pytest.raises(FuelExhausted) as info:
        evaluate(table, call("MaxE", "maxElement", list_value([3, 1, 2])), fuel=2)
    assert info.value.steps == 2


def test_stuck_terms(table):
    with pytest.raises(StuckError):
        evaluate(table, call("MaxE", "maxElement", NIL))
    with pytest.raises(StuckError):
        evaluate(table, parse_expr("1 div 0"))
    with pytest.raises(StuckError):
        evaluate(table, call("MaxE", "nope"))
    with pytest.raises(StuckError):
        evaluate(table, Var("x"))


@pytest.mark.parametrize("src", [
    "new MaxE().maxElement([3, 1, 2])",
    "new MinEClass().minElement([2, 0, 1])",
    "new Pair(4, 9).larger()",
    "new Measurer().twice(new Square(3), 2)",
])
def test_every_step_keeps_the_type(table, src):
    e = parse_expr(src)
    expected = type_expr({}, e, table).type
    steps = 0
    while not is_value(e):
        e = step(table, e)
        steps += 1
        assert table.is_subtype(type_expr({}, e, table).type, expected), show_expr(e)
        assert steps < 10_000
    assert expected == "Num"
