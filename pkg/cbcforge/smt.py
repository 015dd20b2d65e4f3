"""SMT-LIB2 export of obligations.

Sequences live in an uninterpreted sort ``Seq`` with a length, an element
function and a tail function, related by axioms; equality and membership are
defined functions over them. ``unsat`` from a solver means the obligation is
valid.

Without a prover configuration the script quantifies over all integers and
sequences. With one, every variable and every sort-wide quantifier is kept
inside the prover's domains, and integer ranges stay bounded, so the solver's
verdict is the bounded prover's verdict.
"""
import re
from typing import Dict, List, Mapping, Optional

from cbcforge.errors import SmtError
from cbcforge.kernel import (
    BOOL, INT, RESULT, SEQ, AndP, Atom, Binary, BoolLit, Call, Exists, Expr, FalseP, Forall, IfExpr, Implies,
    IntLit, IntRange, New, Not, NotP, Old, OrP, Predicate, Result, SeqElems, SeqIndices, SeqLit, SeqOp, TrueP,
    TypeDomain, Var, map_exprs, sort_of,
)
from cbcforge.prover import Obligation
from cbcforge.schemas import ProverConfig

SMT_SORTS = {INT: "Int", BOOL: "Bool", SEQ: "Seq"}

_ARITH = {"+": "+", "-": "-", "*": "*"}
_COMPARE = {"<": "<", "<=": "<=", ">": ">", ">=": ">="}
_SIMPLE_SYMBOL = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

_AXIOMS = [
    "(assert (forall ((s Seq)) (! (>= (Seq.len s) 0) :pattern ((Seq.len s)))))",
    "(assert (= (Seq.len Seq.nil) 0))",
    "(assert (forall ((x Int) (s Seq)) (! (= (Seq.len (Seq.cons x s)) (+ 1 (Seq.len s)))"
    " :pattern ((Seq.cons x s)))))",
    "(assert (forall ((x Int) (s Seq)) (! (= (Seq.at (Seq.cons x s) 0) x) :pattern ((Seq.cons x s)))))",
    "(assert (forall ((x Int) (s Seq) (i Int)) (! (=> (and (< 0 i) (<= i (Seq.len s)))"
    " (= (Seq.at (Seq.cons x s) i) (Seq.at s (- i 1)))) :pattern ((Seq.at (Seq.cons x s) i)))))",
    "(assert (forall ((s Seq)) (! (=> (> (Seq.len s) 0) (= (Seq.len (Seq.tl s)) (- (Seq.len s) 1)))"
    " :pattern ((Seq.tl s)))))",
    "(assert (forall ((s Seq) (i Int)) (! (=> (and (> (Seq.len s) 0) (<= 0 i) (< i (- (Seq.len s) 1)))"
    " (= (Seq.at (Seq.tl s) i) (Seq.at s (+ i 1)))) :pattern ((Seq.at (Seq.tl s) i)))))",
]


def symbol(name: str) -> str:
    return name if _SIMPLE_SYMBOL.match(name) and name not in ("let", "forall", "exists") else f"|{name}|"


def _longest_literal(node) -> int:
    found = [0]

    def visit(e):
        if isinstance(e, SeqLit):
            found[0] = max(found[0], len(e.elems))
        return e

    map_exprs(node, visit)
    return found[0]


def _prelude(cfg: Optional[ProverConfig], unroll: int) -> List[str]:
    lines = [
        "(declare-sort Seq 0)",
        "(declare-fun Seq.len (Seq) Int)",
        "(declare-fun Seq.at (Seq Int) Int)",
        "(declare-fun Seq.tl (Seq) Seq)",
        "(declare-const Seq.nil Seq)",
        "(declare-fun Seq.cons (Int Seq) Seq)",
    ]
    lines += _AXIOMS
    if cfg is None:
        lines.append("(define-fun Seq.eq ((a Seq) (b Seq)) Bool (and (= (Seq.len a) (Seq.len b))"
                     " (forall ((k Int)) (=> (and (<= 0 k) (< k (Seq.len a))) (= (Seq.at a k) (Seq.at b k))))))")
        lines.append("(define-fun Seq.contains ((a Seq) (x Int)) Bool"
                     " (exists ((k Int)) (and (<= 0 k) (< k (Seq.len a)) (= (Seq.at a k) x))))")
        return lines
    # every sequence in a bounded script is at most ``unroll`` long
    same = " ".join(f"(=> (> (Seq.len a) {k}) (= (Seq.at a {k}) (Seq.at b {k})))" for k in range(unroll))
    member = " ".join(f"(and (> (Seq.len a) {k}) (= (Seq.at a {k}) x))" for k in range(unroll))
    elems = " ".join(f"(=> (> (Seq.len a) {k}) (and (<= {-cfg.seq_elem_bound} (Seq.at a {k}))"
                     f" (<= (Seq.at a {k}) {cfg.seq_elem_bound})))" for k in range(cfg.max_seq_len))
    lines.append(f"(define-fun Seq.eq ((a Seq) (b Seq)) Bool (and (= (Seq.len a) (Seq.len b)) {same}))")
    lines.append(f"(define-fun Seq.contains ((a Seq) (x Int)) Bool (or false {member}))")
    lines.append(f"(define-fun Seq.bounded ((a Seq)) Bool (and (<= 0 (Seq.len a)) (<= (Seq.len a) {cfg.max_seq_len})"
                 f" {elems}))")
    return lines


class _Emitter:
    def __init__(self, types: Mapping[str, str], cfg: Optional[ProverConfig]):
        self.types = {k: sort_of(v) for k, v in types.items()}
        self.cfg = cfg
        self.depth = 0

    def sort(self, e: Expr, scope: Mapping[str, str]) -> str:
        if isinstance(e, IntLit):
            return INT
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, (Var, Result, Old)):
            name = RESULT if isinstance(e, Result) else e.inner.name if isinstance(e, Old) else e.name
            if name in scope:
                return scope[name]
            if name not in self.types:
                raise SmtError(f"no type for {name}")
            return self.types[name]
        if isinstance(e, SeqLit):
            return SEQ
        if isinstance(e, (SeqOp, Call)):
            op = e.op if isinstance(e, SeqOp) else e.method
            return {"size": INT, "get": INT, "contains": BOOL, "element": INT, "tail": SEQ}.get(op, "?")
        if isinstance(e, Binary):
            return INT if e.op in ("+", "-", "*", "div") else BOOL
        if isinstance(e, Not):
            return BOOL
        if isinstance(e, IfExpr):
            return self.sort(e.then, scope)
        if isinstance(e, New) and e.cls in ("Nil", "Cons"):
            return SEQ
        raise SmtError(f"{type(e).__name__} has no SMT sort")

    def expr(self, e: Expr, scope: Mapping[str, str]) -> str:
        if isinstance(e, IntLit):
            return str(e.value) if e.value >= 0 else f"(- {-e.value})"
        if isinstance(e, BoolLit):
            return "true" if e.value else "false"
        if isinstance(e, Var):
            return symbol(e.name)
        if isinstance(e, Result):
            return symbol(RESULT)
        if isinstance(e, Old):
            return symbol(e.inner.name)
        if isinstance(e, Not):
            return f"(not {self.expr(e.inner, scope)})"
        if isinstance(e, SeqLit):
            out = "Seq.nil"
            for x in reversed(e.elems):
                out = f"(Seq.cons {self.expr(x, scope)} {out})"
            return out
        if isinstance(e, New) and e.cls == "Nil" and not e.args:
            return "Seq.nil"
        if isinstance(e, New) and e.cls == "Cons" and len(e.args) == 2:
            return f"(Seq.cons {self.expr(e.args[0], scope)} {self.expr(e.args[1], scope)})"
        if isinstance(e, SeqOp):
            return self._seq(e.op, e.receiver, e.index, scope)
        if isinstance(e, Call) and self.sort(e.receiver, scope) == SEQ and len(e.args) <= 1:
            return self._seq(e.method, e.receiver, e.args[0] if e.args else None, scope)
        if isinstance(e, IfExpr):
            return f"(ite {self.expr(e.cond, scope)} {self.expr(e.then, scope)} {self.expr(e.orelse, scope)})"
        if isinstance(e, Binary):
            return self._binary(e, scope)
        raise SmtError(f"{type(e).__name__} is not exported to SMT-LIB")

    def _seq(self, op: str, receiver: Expr, index: Optional[Expr], scope) -> str:
        s = self.expr(receiver, scope)
        if op == "size":
            return f"(Seq.len {s})"
        if op == "get":
            return f"(Seq.at {s} {self.expr(index, scope)})"
        if op == "contains":
            return f"(Seq.contains {s} {self.expr(index, scope)})"
        if op == "element":
            return f"(Seq.at {s} 0)"
        if op == "tail":
            return f"(Seq.tl {s})"
        raise SmtError(f"unknown sequence operation {op}")

    def _binary(self, e: Binary, scope) -> str:
        a, b = self.expr(e.lhs, scope), self.expr(e.rhs, scope)
        if e.op in _ARITH:
            return f"({_ARITH[e.op]} {a} {b})"
        if e.op == "div":
            # floor division; SMT-LIB div rounds towards the euclidean remainder
            return f"(ite (< {b} 0) (div (- {a}) (- {b})) (div {a} {b}))"
        if e.op in _COMPARE:
            return f"({_COMPARE[e.op]} {a} {b})"
        if e.op == "&&":
            return f"(and {a} {b})"
        if e.op == "||":
            return f"(or {a} {b})"
        lhs, rhs = self.sort(e.lhs, scope), self.sort(e.rhs, scope)
        if lhs != rhs:
            same = "false"
        elif lhs == SEQ:
            same = f"(Seq.eq {a} {b})"
        else:
            same = f"(= {a} {b})"
        return same if e.op == "==" else f"(not {same})"

    def guard(self, name: str, sort: str) -> Optional[str]:
        """Membership of a variable in the prover's domain for its sort."""
        if self.cfg is None:
            return None
        v = symbol(name)
        if sort == INT:
            return f"(and (<= {-self.cfg.int_bound} {v}) (<= {v} {self.cfg.int_bound}))"
        if sort == SEQ:
            return f"(Seq.bounded {v})"
        return None

    def pred(self, p: Predicate, scope: Mapping[str, str]) -> str:
        if isinstance(p, TrueP):
            return "true"
        if isinstance(p, FalseP):
            return "false"
        if isinstance(p, Atom):
            return self.expr(p.expr, scope)
        if isinstance(p, AndP):
            return "(and " + " ".join(self.pred(q, scope) for q in p.items) + ")"
        if isinstance(p, OrP):
            return "(or " + " ".join(self.pred(q, scope) for q in p.items) + ")"
        if isinstance(p, NotP):
            return f"(not {self.pred(p.inner, scope)})"
        if isinstance(p, Implies):
            return f"(=> {self.pred(p.lhs, scope)} {self.pred(p.rhs, scope)})"
        if isinstance(p, (Forall, Exists)):
            return self._quantifier(p, scope)
        raise SmtError(f"{type(p).__name__} is not exported to SMT-LIB")

    def _quantifier(self, p, scope) -> str:
        kw = "forall" if isinstance(p, Forall) else "exists"
        join = "=>" if isinstance(p, Forall) else "and"
        d, v = p.domain, symbol(p.var)
        self.depth += 1
        try:
            if isinstance(d, SeqElems):
                k = f"k!{self.depth}"
                s = self.expr(d.seq, scope)
                body = self.pred(p.body, {**scope, p.var: INT})
                return (f"({kw} (({k} Int)) ({join} (and (<= 0 {k}) (< {k} (Seq.len {s})))"
                        f" (let (({v} (Seq.at {s} {k}))) {body})))")
            if isinstance(d, SeqIndices):
                s = self.expr(d.seq, scope)
                body = self.pred(p.body, {**scope, p.var: INT})
                return f"({kw} (({v} Int)) ({join} (and (<= 0 {v}) (< {v} (Seq.len {s}))) {body}))"
            if isinstance(d, IntRange):
                body = self.pred(p.body, {**scope, p.var: INT})
                if self.cfg is None and d.lo == -ProverConfig().int_bound and d.hi == ProverConfig().int_bound:
                    return f"({kw} (({v} Int)) {body})"
                return f"({kw} (({v} Int)) ({join} (and (<= {d.lo} {v}) (<= {v} {d.hi})) {body}))"
            if isinstance(d, TypeDomain):
                sort = sort_of(d.type_name)
                if sort not in SMT_SORTS:
                    raise SmtError(f"quantifier over class {d.type_name} is not exported")
                body = self.pred(p.body, {**scope, p.var: sort})
                g = self.guard(p.var, sort)
                if g is None:
                    return f"({kw} (({v} {SMT_SORTS[sort]})) {body})"
                return f"({kw} (({v} {SMT_SORTS[sort]})) ({join} {g} {body}))"
        finally:
            self.depth -= 1
        raise SmtError(f"unknown quantifier domain {d!r}")


def emit_smt(ob: Obligation, cfg: Optional[ProverConfig] = None) -> str:
    """A complete SMT-LIB2 script whose ``unsat`` verdict means ``ob`` is valid."""
    types: Dict[str, str] = ob.types
    em = _Emitter(types, cfg)
    names = ob.free_vars()
    for n in names:
        if n not in types:
            raise SmtError(f"{ob.id}: no type for {n}")
        if sort_of(types[n]) not in SMT_SORTS:
            raise SmtError(f"{ob.id}: {n} has class type {types[n]}, which is not exported")
    unroll = max(cfg.max_seq_len if cfg else 0, _longest_literal(ob.hypothesis), _longest_literal(ob.conclusion))
    lines = [f"; obligation {ob.id}"]
    if ob.provenance:
        lines.append(f"; from {ob.provenance}")
    lines.append("(set-logic ALL)")
    lines += _prelude(cfg, unroll)
    for n in names:
        lines.append(f"(declare-const {symbol(n)} {SMT_SORTS[sort_of(types[n])]})")
    for n in names:
        g = em.guard(n, sort_of(types[n]))
        if g is not None:
            lines.append(f"(assert {g})")
    hyp, concl = em.pred(ob.hypothesis, {}), em.pred(ob.conclusion, {})
    lines.append(f"(assert (and {hyp} (not {concl})))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def smt_file_name(ob: Obligation) -> str:
    return re.sub(r"[^A-Za-z0-9_.\-']", "_", ob.id) + ".smt2"
