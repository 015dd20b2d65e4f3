"""Randomized checks of the composition operators and of the prover against a naive oracle."""
import random
from itertools import product

import pytest

from cbcforge.errors import ConflictError, SpecIncompatible
from cbcforge.interp import evaluate
from cbcforge.kernel import INT, IntLit
from cbcforge.prover import Obligation, Valid, check_implication
from cbcforge.schemas import ProverConfig
from cbcforge.syntax import parse_expr, parse_predicate, parse_traits
from cbcforge.traits import check_body, compose_bodies, flatten_report, make_abstract
from tests.oracle import int_domain, naive_valid

pytestmark = pytest.mark.slow

NAMES = ("f", "g", "h")
CFG = ProverConfig(int_bound=2, max_seq_len=1, seq_elem_bound=1)
ROUNDS = 300

# g calls f, h calls g and f; h only verifies when f promises result >= 1
BODIES = {"f": "x * x + 1", "g": "f(x) + 1", "h": "g(x) + f(x)"}
CALLEES = {"f": (), "g": ("f",), "h": ("g", "f")}


def post(name, strong):
    if name == "f":
        return "result >= 1" if strong else "result >= 0"
    return "result >= 1" if name == "g" else "result >= 2"


def method_src(name, has_body, strong):
    head = f"  @Post: {post(name, strong)}\n"
    if has_body:
        return head + f"  Num {name}(Num x) = {BODIES[name]}\n"
    return head + f"  abstract Num {name}(Num x);\n"


def trait_src(trait, shape):
    return f"trait {trait} {{\n" + "".join(method_src(n, *shape[n]) for n in NAMES if n in shape) + "}\n"


def random_shape(rng):
    """Method name -> (concrete, strong); every callee of a concrete method is declared."""
    shape = {n: (rng.random() < 0.4, rng.random() < 0.5) for n in rng.sample(NAMES, rng.randint(0, len(NAMES)))}
    for n in ("h", "g"):
        if shape.get(n, (False,))[0]:
            for callee in CALLEES[n]:
                shape.setdefault(callee, (False, rng.random() < 0.5))
    return shape


def body_of(shape, trait="T"):
    return parse_traits(trait_src(trait, shape)).get(trait).expr.body


def summary(body):
    return {m.name: m for m in body.methods}


def concrete(shape, name):
    return shape.get(name, (False,))[0]


def conflicts(*shapes):
    return any(sum(1 for s in shapes if concrete(s, n)) > 1 for n in NAMES)


def incompatible(*shapes):
    """A concrete f promising only result >= 0 against an abstract f promising result >= 1."""
    weak_body = any(s.get("f") == (True, False) for s in shapes)
    strong_header = any(s.get("f") == (False, True) for s in shapes)
    return weak_body and strong_header


def verified_alone(shape):
    return not (concrete(shape, "h") and not shape["f"][1])


def test_composition_fails_exactly_on_double_bodies_and_weaker_bodies():
    rng = random.Random(7)
    for _ in range(ROUNDS):
        s1, s2 = random_shape(rng), random_shape(rng)
        clash, weaker = conflicts(s1, s2), incompatible(s1, s2)
        if clash or weaker:
            if clash and weaker:
                expected = (ConflictError, SpecIncompatible)
            else:
                expected = ConflictError if clash else SpecIncompatible
            with pytest.raises(expected):
                compose_bodies(body_of(s1), body_of(s2), CFG)
            continue
        body = compose_bodies(body_of(s1), body_of(s2), CFG)
        assert set(body.names) == set(s1) | set(s2)
        for m in body.methods:
            assert m.is_abstract == (not concrete(s1, m.name) and not concrete(s2, m.name))
        if "f" in s1 and "f" in s2:
            strong = body_of({"f": (False, True)}).method("f").spec.post
            assert (body.method("f").spec.post == strong) == (s1["f"][1] or s2["f"][1])


def test_composition_is_commutative():
    rng = random.Random(11)
    for _ in range(ROUNDS):
        s1, s2 = random_shape(rng), random_shape(rng)
        if conflicts(s1, s2) or incompatible(s1, s2):
            continue
        left = compose_bodies(body_of(s1), body_of(s2), CFG)
        right = compose_bodies(body_of(s2), body_of(s1), CFG)
        assert summary(left) == summary(right)


def test_composition_is_associative():
    rng = random.Random(13)
    for _ in range(ROUNDS):
        s1, s2, s3 = random_shape(rng), random_shape(rng), random_shape(rng)
        if conflicts(s1, s2, s3) or incompatible(s1, s2, s3):
            continue
        b1, b2, b3 = body_of(s1), body_of(s2), body_of(s3)
        grouped_left = compose_bodies(compose_bodies(b1, b2, CFG), b3, CFG)
        grouped_right = compose_bodies(b1, compose_bodies(b2, b3, CFG), CFG)
        assert summary(grouped_left) == summary(grouped_right)


def test_make_abstract_is_idempotent_and_local():
    rng = random.Random(17)
    for _ in range(ROUNDS):
        shape = random_shape(rng)
        if not shape:
            continue
        body = body_of(shape)
        name = rng.choice(sorted(shape))
        once = make_abstract(body, name)
        assert make_abstract(once, name) == once
        assert once.method(name).is_abstract
        assert once.method(name).spec == body.method(name).spec
        for m in once.methods:
            if m.name != name:
                assert m == body.method(m.name)


def test_make_abstract_undoes_composition_with_a_body():
    rng = random.Random(19)
    for _ in range(ROUNDS):
        shape = {n: (False, rng.random() < 0.5) for n in rng.sample(NAMES, rng.randint(1, len(NAMES)))}
        name = rng.choice(sorted(shape))
        composed = compose_bodies(body_of(shape), body_of({name: (True, shape[name][1])}), CFG)
        assert summary(make_abstract(composed, name)) == summary(body_of(shape))


def test_flattening_keeps_composed_bodies_verified():
    rng = random.Random(23)
    passed = 0
    for _ in range(ROUNDS):
        shapes = [random_shape(rng) for _ in range(3)]
        names = sorted(set().union(*shapes))
        dropped = rng.choice(names) if names else None
        src = "".join(trait_src(f"T{k}", s) for k, s in enumerate(shapes)) + "trait All = T0 + T1 + T2\n"
        if dropped is not None:
            src += f"trait Less = All[makeAbstract {dropped}]\n"
        result = flatten_report(parse_traits(src), CFG)
        expected = not conflicts(*shapes) and not incompatible(*shapes) and all(map(verified_alone, shapes))
        assert result.ok == expected, (src, [str(d) for d in result.diagnostics])
        if not expected:
            continue
        passed += 1
        table = result.table
        bodies = [body_of(s) for s in shapes]
        composed = compose_bodies(compose_bodies(bodies[0], bodies[1], CFG), bodies[2], CFG)
        assert summary(table.bodies["All"]) == summary(composed)
        assert check_body(table, "All", table.bodies["All"], CFG).ok
        if dropped is not None:
            assert table.bodies["Less"].method(dropped).is_abstract
            assert check_body(table, "Less", table.bodies["Less"], CFG).ok
            assert check_body(table, "All", make_abstract(table.bodies["All"], dropped), CFG).ok
    assert passed > ROUNDS // 10


INTERFACE_SRC = """
interface Sized {{
  @Post: {iface}
  abstract Num f(Num x);
}}
class Impl implements Sized {{
  @Post: {impl}
  Num f(Num x) = x * x + 1
}}
class User {{
  @Post: result >= 1
  Num use(Sized s, Num x) = s.f(x) + 1
}}
"""


@pytest.mark.parametrize("iface_strong, impl_strong", list(product([False, True], repeat=2)))
def test_implementations_are_used_through_their_interface(iface_strong, impl_strong):
    src = INTERFACE_SRC.format(iface=post("f", iface_strong), impl=post("f", impl_strong))
    result = flatten_report(parse_traits(src), CFG)
    assert result.ok == (impl_strong or not iface_strong)
    if not result.ok:
        return
    table = result.table
    assert table.is_subtype("Impl", "Sized")
    assert check_body(table, "Impl", table.bodies["Impl"], CFG).ok
    assert check_body(table, "User", table.bodies["User"], CFG).ok
    assert evaluate(table, parse_expr("new User().use(new Impl(), 2)")) == IntLit(6)


# ────── prover against the naive oracle ──────

ORACLE_CASES = 1000
ARITH = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}
COMPARE = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b, "==": lambda a, b: a == b,
           "!=": lambda a, b: a != b, ">=": lambda a, b: a >= b}


def random_term(rng, depth):
    if depth == 0 or rng.random() < 0.4:
        leaf = rng.choice(["x", "y", "0", "1", "2", "3"])
        if leaf.isdigit():
            return leaf, lambda s, v=int(leaf): v
        return leaf, lambda s, n=leaf: s[n]
    op = rng.choice(sorted(ARITH))
    (lt, lf), (rt, rf) = random_term(rng, depth - 1), random_term(rng, depth - 1)
    return f"({lt} {op} {rt})", lambda s, f=ARITH[op]: f(lf(s), rf(s))


def random_pred(rng, depth):
    if depth == 0 or rng.random() < 0.4:
        op = rng.choice(sorted(COMPARE))
        (lt, lf), (rt, rf) = random_term(rng, 2), random_term(rng, 2)
        return f"{lt} {op} {rt}", lambda s, f=COMPARE[op]: f(lf(s), rf(s))
    kind = rng.choice(["&&", "||", "!"])
    pt, pf = random_pred(rng, depth - 1)
    if kind == "!":
        return f"!({pt})", lambda s: not pf(s)
    qt, qf = random_pred(rng, depth - 1)
    if kind == "&&":
        return f"({pt} && {qt})", lambda s: pf(s) and qf(s)
    return f"({pt} || {qt})", lambda s: pf(s) or qf(s)


def test_prover_agrees_with_the_oracle_on_random_obligations():
    cfg = ProverConfig()
    domains = {"x": int_domain(cfg.int_bound), "y": int_domain(cfg.int_bound)}
    rng = random.Random(29)
    for k in range(ORACLE_CASES):
        (ht, hf), (ct, cf) = random_pred(rng, 2), random_pred(rng, 2)
        ob = Obligation(f"random.{k}", parse_predicate(ht), parse_predicate(ct), "", {"x": INT, "y": INT})
        expected = naive_valid(["x", "y"], domains, lambda x, y: hf({"x": x, "y": y}),
                               lambda x, y: cf({"x": x, "y": y}))
        assert isinstance(check_implication(ob, cfg), Valid) == expected, (ht, ct)
