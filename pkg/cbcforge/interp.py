"""Small-step evaluation of closed trait-calculus expressions over a flattened table.

Values are integer and boolean literals and ``new C(vs)`` with value
arguments; lists are ``new Nil()`` and ``new Cons(v, l)``.
"""
from typing import List, Optional, Sequence, Tuple

from cbcforge.config import FUEL
from cbcforge.errors import FuelExhausted, StuckError
from cbcforge.kernel import (
    Binary, BoolLit, Call, Expr, IfExpr, IntLit, New, Not, SeqLit, SeqOp, TypeTest, Var, free_vars, substitute_all,
)
from cbcforge.logging_module import logger
from cbcforge.syntax import show_expr
from cbcforge.traits import THIS, FlatTable

NIL = New("Nil", ())


def cons(head: Expr, tail: Expr) -> New:
    return New("Cons", (head, tail))


def list_value(items: Sequence[int]) -> Expr:
    out: Expr = NIL
    for x in reversed(list(items)):
        out = cons(IntLit(x), out)
    return out


def is_value(e: Expr) -> bool:
    if isinstance(e, (IntLit, BoolLit)):
        return True
    return isinstance(e, New) and all(is_value(a) for a in e.args)


def list_items(v: Expr) -> Optional[List[Expr]]:
    """The elements of a list value, or None if ``v`` is not one."""
    out = []
    while isinstance(v, New) and v.cls == "Cons" and len(v.args) == 2:
        out.append(v.args[0])
        v = v.args[1]
    if isinstance(v, New) and v.cls == "Nil":
        return out
    return None


def python_value(v: Expr):
    if isinstance(v, (IntLit, BoolLit)):
        return v.value
    items = list_items(v)
    if items is not None:
        return [python_value(x) for x in items]
    return {"class": v.cls, "fields": [python_value(a) for a in v.args]}


def show_value(v: Expr) -> str:
    items = list_items(v)
    if items is not None:
        return "[" + ", ".join(show_value(x) for x in items) + "]"
    return show_expr(v)


def _int(v: Expr, what: str) -> int:
    if not isinstance(v, IntLit):
        raise StuckError(f"{what} expects a number, found {show_expr(v)}")
    return v.value


def _bool(v: Expr, what: str) -> bool:
    if not isinstance(v, BoolLit):
        raise StuckError(f"{what} expects a boolean, found {show_expr(v)}")
    return v.value


def _items(v: Expr, what: str) -> List[Expr]:
    items = list_items(v)
    if items is None:
        raise StuckError(f"{what} on a non-list {show_expr(v)}")
    return items


def _arith(op: str, a: int, b: int) -> Expr:
    if op == "+":
        return IntLit(a + b)
    if op == "-":
        return IntLit(a - b)
    if op == "*":
        return IntLit(a * b)
    if op == "div":
        if b == 0:
            raise StuckError("division by zero")
        return IntLit(a // b)
    return BoolLit({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])


def _seq(op: str, v: Expr, arg: Optional[Expr]) -> Expr:
    items = _items(v, f"{op}()")
    if op == "size":
        return IntLit(len(items))
    if op == "contains":
        return BoolLit(arg in items)
    if op == "get":
        i = _int(arg, "get()")
        if not 0 <= i < len(items):
            raise StuckError(f"get({i}) out of range")
        return items[i]
    if not items:
        raise StuckError(f"{op}() of an empty list")
    return items[0] if op == "element" else v.args[1]


def _instance_of(table: FlatTable, v: Expr, cls: str) -> bool:
    if isinstance(v, IntLit):
        return cls == "Num"
    if isinstance(v, BoolLit):
        return cls == "Bool"
    return table.is_subtype(v.cls, cls)


def _invoke(table: FlatTable, recv: Expr, method: str, args: Tuple[Expr, ...]) -> Expr:
    if not isinstance(recv, New):
        raise StuckError(f"{method}() called on {show_expr(recv)}")
    if recv.cls not in table.bodies:
        raise StuckError(f"no class {recv.cls}")
    body = table.bodies[recv.cls]
    m = body.method(method)
    if m is None:
        raise StuckError(f"{recv.cls} has no method {method}")
    if m.is_abstract:
        getters = body.getters()
        if args or m not in getters or len(getters) != len(recv.args):
            raise StuckError(f"{recv.cls}.{method} has no implementation")
        return recv.args[getters.index(m)]
    if len(args) != len(m.params):
        raise StuckError(f"{recv.cls}.{method} takes {len(m.params)} argument(s)")
    return substitute_all(m.body, {THIS: recv, **dict(zip(m.param_names, args))})


def step(table: FlatTable, e: Expr) -> Expr:
    """One reduction step; a value steps to itself."""
    if is_value(e):
        return e
    if isinstance(e, Var):
        raise StuckError(f"free variable {e.name}")
    if isinstance(e, Not):
        if not is_value(e.inner):
            return Not(step(table, e.inner))
        return BoolLit(not _bool(e.inner, "!"))
    if isinstance(e, TypeTest):
        if not is_value(e.inner):
            return TypeTest(step(table, e.inner), e.cls)
        return BoolLit(_instance_of(table, e.inner, e.cls))
    if isinstance(e, IfExpr):
        if not is_value(e.cond):
            return IfExpr(step(table, e.cond), e.then, e.orelse)
        return e.then if _bool(e.cond, "if") else e.orelse
    if isinstance(e, Binary):
        if not is_value(e.lhs):
            return Binary(e.op, step(table, e.lhs), e.rhs)
        if e.op in ("&&", "||"):
            left = _bool(e.lhs, e.op)
            if left == (e.op == "||"):
                return BoolLit(left)
            return e.rhs
        if not is_value(e.rhs):
            return Binary(e.op, e.lhs, step(table, e.rhs))
        if e.op == "==":
            return BoolLit(e.lhs == e.rhs)
        if e.op == "!=":
            return BoolLit(e.lhs != e.rhs)
        return _arith(e.op, _int(e.lhs, e.op), _int(e.rhs, e.op))
    if isinstance(e, SeqLit):
        for k, x in enumerate(e.elems):
            if not is_value(x):
                return SeqLit(e.elems[:k] + (step(table, x),) + e.elems[k + 1:])
        out: Expr = NIL
        for x in reversed(e.elems):
            out = cons(x, out)
        return out
    if isinstance(e, SeqOp):
        if not is_value(e.receiver):
            return SeqOp(e.op, step(table, e.receiver), e.index)
        if e.index is not None and not is_value(e.index):
            return SeqOp(e.op, e.receiver, step(table, e.index))
        return _seq(e.op, e.receiver, e.index)
    if isinstance(e, New):
        return New(e.cls, _step_first(table, e.args))
    if isinstance(e, Call):
        if not is_value(e.receiver):
            return Call(step(table, e.receiver), e.method, e.args)
        if not all(is_value(a) for a in e.args):
            return Call(e.receiver, e.method, _step_first(table, e.args))
        return _invoke(table, e.receiver, e.method, e.args)
    raise StuckError(f"cannot reduce {type(e).__name__}")


def _step_first(table: FlatTable, args: Tuple[Expr, ...]) -> Tuple[Expr, ...]:
    for k, a in enumerate(args):
        if not is_value(a):
            return args[:k] + (step(table, a),) + args[k + 1:]
    return args


def evaluate(table: FlatTable, e: Expr, fuel: int = FUEL) -> Expr:
    """Step ``e`` until it is a value; deterministic."""
    if free_vars(e):
        raise StuckError(f"expression is not closed: {', '.join(sorted(free_vars(e)))}")
    steps = 0
    while not is_value(e):
        if steps >= fuel:
            logger.warning(f"evaluation ran out of fuel after {steps} steps")
            raise FuelExhausted(f"no value after {steps} steps", steps)
        try:
            e = step(table, e)
        except StuckError as exc:
            logger.warning(f"stuck after {steps} steps: {exc.detail}")
            raise
        steps += 1
    logger.debug(f"value {show_value(e)} after {steps} steps")
    return e
