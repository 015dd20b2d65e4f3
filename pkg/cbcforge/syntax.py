"""Concrete syntax: arpeggio grammars for predicates, statements, refinement
scripts (.cbc) and trait files (.trait/.tc), plus the matching printers.

Grammar rules are plain functions; ``_`` builds regex terminals. Keywords
that carry meaning are regex rules with their own visitor, everything else
(punctuation, structural keywords) is dropped by ``visit__default__``.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, NamedTuple, Optional as Opt, Sequence, Tuple

from arpeggio import EOF, NoMatch, OneOrMore, Optional, ParserPython, PTNodeVisitor, ZeroOrMore, visit_parse_tree
from arpeggio import RegExMatch as _

from cbcforge.calculus import CLASS, TRAIT, Body, Lit, MakeAbstract, Method, Plus, Ref, TraitDecl, TraitExpr, TraitTable
from cbcforge.errors import CbcError, ParseError
from cbcforge.kernel import (
    RESULT, SEQ_OPS, Abstract, AndP, Assign, Atom, Binary, BlockRef, BoolLit, Call, Contract, Exists,
    Expr, FalseP, Forall, IfExpr, Implies, IntLit, IntRange, LocalDecl, MethodCallStmt, New, Not, NotP, Old, OrP,
    Predicate, Quantifier, Repeat, Result, Select, Seq, SeqElems, SeqIndices, SeqLit, SeqOp, Skip, Statement, TrueP,
    TypeDomain, TypeTest, Var, conj, disj, lift, negate, sort_of,
)


_RESERVED = r"true|false|result|old|forall|exists|in|new|if|elseif|else|div"


# ────── lexical rules ──────

def comment():
    return [_(r"//[^\n]*"), _(r"/\*[\s\S]*?\*/")]


def ident():
    return _(r"(?!(?:%s)\b)[A-Za-z_][A-Za-z0-9_]*" % _RESERVED)


def number():
    return _(r"\d+")


def signed():
    return _(r"-?\d+")


def bool_lit():
    return _(r"(true|false)\b")


def result_kw():
    return _(r"result\b")


def sort_name():
    return _(r"(int|bool|seq)\b")


def quant_kw():
    return _(r"(forall|exists)\b")


def imp_op():
    return _(r"==>")


def or_op():
    return _(r"\|\||\|")


def and_op():
    return _(r"&&|&")


def cmp_op():
    return _(r"==(?!>)|!=|<=|>=|<|>")


def add_op():
    return _(r"\+|-")


def mul_op():
    return _(r"\*|/|div\b")


def unary_op():
    return _(r"!(?!=)|-")


# ────── expressions ──────

def expr():
    return disjunction, Optional(imp_op, expr)


def disjunction():
    return conjunction, ZeroOrMore(or_op, conjunction)


def conjunction():
    return comparison, ZeroOrMore(and_op, comparison)


def comparison():
    return additive, Optional(cmp_op, additive)


def additive():
    return multiplicative, ZeroOrMore(add_op, multiplicative)


def multiplicative():
    return unary, ZeroOrMore(mul_op, unary)


def unary():
    return [(unary_op, unary), postfix]


def postfix():
    return primary, ZeroOrMore(member)


def member():
    return ".", ident, "(", Optional(arglist), ")"


def arglist():
    return expr, ZeroOrMore(",", expr)


def primary():
    return [quantified, if_expr, new_expr, old_expr, result_kw, bool_lit, number, seq_lit, call_or_var, paren]


def paren():
    return "(", expr, ")"


def call_or_var():
    return ident, Optional(call_args)


def call_args():
    return "(", Optional(arglist), ")"


def seq_lit():
    return "[", Optional(arglist), "]"


def old_expr():
    return _(r"old\b"), "(", ident, ")"


def new_expr():
    return _(r"new\b"), ident, "(", Optional(arglist), ")"


def if_expr():
    return _(r"if\b"), "(", expr, ")", "{", expr, "}", ZeroOrMore(elseif_expr), _(r"else\b"), "{", expr, "}"


def elseif_expr():
    return _(r"elseif\b"), "(", expr, ")", "{", expr, "}"


def quantified():
    return quant_kw, [binder_in, binder_typed], ":", expr


def binder_in():
    return ident, _(r"in\b"), domain


def binder_typed():
    return [sort_name, ident], ident


def domain():
    return [int_range, indices_domain, sort_domain, postfix]


def int_range():
    return "[", signed, ",", signed, "]"


def indices_domain():
    return _(r"indices\b"), "(", expr, ")"


def sort_domain():
    return _(r"(int|bool|seq)\b(?!\s*[.(])")


def predicate_file():
    return expr, EOF


# ────── statements ──────

def stmt_block():
    return "{", ZeroOrMore(statement), "}"


def statement():
    return [skip_stmt, block_stmt, loop_stmt, if_stmt, choose_stmt, decl_stmt, call_stmt, assign_stmt]


def skip_stmt():
    return "skip", ";"


def block_stmt():
    return "block", ident, ";"


def loop_stmt():
    return ("loop_invariant", expr, ";", "decreases", expr, ";",
            "while", "(", expr, ")", stmt_block)


def if_stmt():
    return "if", "(", expr, ")", stmt_block, ZeroOrMore(elseif_stmt), Optional(else_stmt)


def elseif_stmt():
    return "elseif", "(", expr, ")", stmt_block


def else_stmt():
    return "else", stmt_block


def choose_stmt():
    return "choose", "{", OneOrMore(when_clause), "}"


def when_clause():
    return "when", "(", expr, ")", stmt_block


def decl_stmt():
    return sort_name, ident, "=", expr, ";"


def target():
    return [result_kw, ident]


def call_stmt():
    return target, "=", ident, call_args, ";"


def assign_stmt():
    return target, "=", expr, ";"


def statement_file():
    return ZeroOrMore(statement), EOF


# ────── refinement scripts ──────

def cbc_file():
    return ZeroOrMore([method_unit, block_def]), EOF


def method_unit():
    return ("method", sort_name, ident, "(", Optional(params), ")", requires, ensures, Optional(modifies),
            "{", ZeroOrMore(refine_step), "}")


def modifies():
    return "modifies", params, ";"


def params():
    return param, ZeroOrMore(",", param)


def param():
    return [sort_name, ident], ident


def requires():
    return "requires", expr, ";"


def ensures():
    return "ensures", expr, ";"


def refine_step():
    return "refine", ident, rule, ";"


def rule():
    return [skip_rule, assignment_rule, declare_rule, composition_rule, selection_rule,
            repetition_rule, weaken_rule, strengthen_rule, call_rule, block_rule]


def skip_rule():
    return _(r"skip\b")


def assignment_rule():
    return "assignment", target, "=", expr


def declare_rule():
    return "declare", sort_name, ident, "=", expr


def composition_rule():
    return "composition", "mid", ":", expr


def selection_rule():
    return "selection", OneOrMore(guard)


def guard():
    return "(", expr, ")"


def repetition_rule():
    return "repetition", "invariant", ":", invariant_part, "variant", ":", variant_part, "guard", ":", guard_part


def invariant_part():
    return expr,


def variant_part():
    return expr,


def guard_part():
    return expr,


def weaken_rule():
    return "weaken", "pre", ":", expr


def strengthen_rule():
    return "strengthen", "post", ":", expr


def call_rule():
    return "call", target, "=", ident, call_args


def block_rule():
    return "block", ident


def block_def():
    return ("block", ident, "{", requires, ensures, Optional(accessible), Optional(assignable), "}",
            "is", stmt_block)


def accessible():
    return "accessible", Optional(id_list), ";"


def assignable():
    return "assignable", Optional(id_list), ";"


def id_list():
    return [result_kw, ident], ZeroOrMore(",", [result_kw, ident])


# ────── trait files ──────

def trait_file():
    return ZeroOrMore(trait_decl), EOF


def trait_decl():
    return [body_decl, expr_decl]


def decl_kind():
    return _(r"(trait|class|interface)\b")


def body_decl():
    return decl_kind, ident, Optional(implements), "{", ZeroOrMore(method_def), "}"


def expr_decl():
    return Optional(decl_kind), ident, "=", trait_expr, Optional(";")


def implements():
    return "implements", ident, ZeroOrMore(",", ident)


def trait_expr():
    return trait_term, ZeroOrMore("+", trait_term)


def trait_term():
    return trait_atom, ZeroOrMore(make_abstract)


def trait_atom():
    return [body_lit, trait_paren, ident]


def trait_paren():
    return "(", trait_expr, ")"


def make_abstract():
    return "[", "makeAbstract", ident, "]"


def interface_flag():
    return _(r"interface\b")


def body_lit():
    return "{", Optional(interface_flag), Optional(implements), ZeroOrMore(method_def), "}"


def method_def():
    return (ZeroOrMore(annotation), Optional(abstract_flag), ident, ident,
            "(", Optional(typed_params), ")", Optional(method_body), Optional(";"))


def abstract_flag():
    return _(r"abstract\b")


def annotation():
    return [pre_ann, post_ann, measure_ann]


def pre_ann():
    return "@Pre", ":", expr


def post_ann():
    return "@Post", ":", expr


def measure_ann():
    return "@Measure", ":", expr


def typed_params():
    return typed_param, ZeroOrMore(",", typed_param)


def typed_param():
    return [sort_name, ident], ident


def method_body():
    return "=", expr


# ────── parse results for scripts ──────

class Tok(NamedTuple):
    kind: str
    text: str


@dataclass(frozen=True)
class RefineStep:
    node: str
    rule: str
    args: Dict[str, Any] = field(default_factory=dict)
    line: int = 0


@dataclass(frozen=True)
class MethodScript:
    name: str
    return_type: str
    params: Tuple[Tuple[str, str], ...]
    contract: Contract
    steps: Tuple[RefineStep, ...]
    state: Tuple[Tuple[str, str], ...] = ()
    line: int = 0


@dataclass(frozen=True)
class BlockScript:
    name: str
    contract: Contract
    accessible: Tuple[str, ...]
    assignable: Tuple[str, ...]
    body: Statement
    line: int = 0


@dataclass(frozen=True)
class CbcScript:
    methods: Tuple[MethodScript, ...]
    blocks: Tuple[BlockScript, ...]
    source: str = "<input>"


# ────── visitor ──────

class _Member(NamedTuple):
    name: str
    args: Tuple[Expr, ...]


class _Elseif(NamedTuple):
    cond: Expr
    value: Any


class _Binder(NamedTuple):
    name: str
    domain: Any
    typed: Opt[str]


class _Annotation(NamedTuple):
    key: str
    value: Any


def _flat(children) -> list:
    out = []
    for c in children:
        if isinstance(c, list):
            out.extend(_flat(c))
        elif c is not None and not isinstance(c, str):
            out.append(c)
    return out


def as_predicate(x) -> Predicate:
    return x if isinstance(x, Predicate) else lift(x)


def as_expr(x, where: str = "term position") -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, TrueP):
        return BoolLit(True)
    if isinstance(x, FalseP):
        return BoolLit(False)
    if isinstance(x, Atom):
        return x.expr
    if isinstance(x, AndP):
        return _fold("&&", [as_expr(q, where) for q in x.items])
    if isinstance(x, OrP):
        return _fold("||", [as_expr(q, where) for q in x.items])
    if isinstance(x, NotP):
        return Not(as_expr(x.inner, where))
    if isinstance(x, Implies):
        return Binary("||", Not(as_expr(x.lhs, where)), as_expr(x.rhs, where))
    raise CbcError(f"quantifier not allowed in {where}")


def _fold(op: str, items: Sequence[Expr]) -> Expr:
    out = items[0]
    for x in items[1:]:
        out = Binary(op, out, x)
    return out



class CbcVisitor(PTNodeVisitor):
    """Builds kernel trees from an arpeggio parse tree."""

    def __init__(self, parser, source: str = "<input>", **kwargs):
        super().__init__(**kwargs)
        self.parser = parser
        self.source = source

    def _error(self, node, detail: str):
        line, col = self.parser.pos_to_linecol(node.position)
        return ParseError(detail, line, col, self.source)

    def _line(self, node) -> int:
        return self.parser.pos_to_linecol(node.position)[0]

    def visit__default__(self, node, children):
        if not children and hasattr(node, "value"):
            return None
        return _flat(children)

    # tokens
    def visit_ident(self, node, children):
        return Tok("ident", node.value)

    def visit_number(self, node, children):
        return IntLit(int(node.value))

    def visit_signed(self, node, children):
        return Tok("int", node.value)

    def visit_bool_lit(self, node, children):
        return BoolLit(node.value == "true")

    def visit_result_kw(self, node, children):
        return Result()

    def visit_sort_name(self, node, children):
        return Tok("sort", node.value)

    def visit_quant_kw(self, node, children):
        return Tok("quant", node.value)

    def visit_decl_kind(self, node, children):
        return Tok("kind", node.value)

    def visit_interface_flag(self, node, children):
        return Tok("interface", node.value)

    def visit_abstract_flag(self, node, children):
        return Tok("abstract", node.value)

    def visit_skip_rule(self, node, children):
        return Tok("skip", node.value)

    def _op(self, node, children):
        return Tok("op", node.value)

    visit_imp_op = visit_or_op = visit_and_op = visit_cmp_op = visit_add_op = visit_mul_op = visit_unary_op = _op

    # expressions
    def visit_expr(self, node, children):
        items = _flat(children)
        if len(items) == 1:
            return items[0]
        lhs, _op, rhs = items
        return Implies(as_predicate(lhs), as_predicate(rhs))

    def _logic(self, node, children, combine):
        items = [c for c in _flat(children) if not isinstance(c, Tok)]
        if len(items) == 1:
            return items[0]
        if any(isinstance(c, Predicate) for c in items):
            return combine(*[as_predicate(c) for c in items])
        return _fold("||" if combine is disj else "&&", items)

    def visit_disjunction(self, node, children):
        return self._logic(node, children, disj)

    def visit_conjunction(self, node, children):
        return self._logic(node, children, conj)

    def visit_comparison(self, node, children):
        items = _flat(children)
        if len(items) == 1:
            return items[0]
        lhs, op, rhs = items
        try:
            return Binary(op.text, as_expr(lhs), as_expr(rhs))
        except CbcError as exc:
            raise self._error(node, exc.detail)

    def _arith(self, node, children):
        items = _flat(children)
        out = items[0]
        for op, rhs in zip(items[1::2], items[2::2]):
            name = "div" if op.text in ("/", "div") else op.text
            try:
                out = Binary(name, as_expr(out), as_expr(rhs))
            except CbcError as exc:
                raise self._error(node, exc.detail)
        return out

    visit_additive = visit_multiplicative = _arith

    def visit_unary(self, node, children):
        items = _flat(children)
        if len(items) == 1:
            return items[0]
        op, inner = items
        if op.text == "-":
            if isinstance(inner, IntLit):
                return IntLit(-inner.value)
            return Binary("-", IntLit(0), as_expr(inner))
        if isinstance(inner, Predicate):
            return negate(inner)
        return Not(inner)

    def visit_member(self, node, children):
        items = _flat(children)
        name = items[0].text
        args = tuple(items[1]) if len(items) > 1 else ()
        return _Member(name, args)

    def visit_postfix(self, node, children):
        items = _flat(children)
        out = items[0]
        for m in items[1:]:
            receiver = as_expr(out)
            if m.name in SEQ_OPS:
                want = 1 if SEQ_OPS[m.name] else 0
                if len(m.args) != want:
                    raise self._error(node, f"{m.name}() takes {want} argument(s)")
                out = SeqOp(m.name, receiver, m.args[0] if want else None)
            else:
                out = Call(receiver, m.name, m.args)
        return out

    def visit_arglist(self, node, children):
        return [tuple(as_expr(c, "argument") for c in _flat(children))]

    def visit_call_args(self, node, children):
        items = _flat(children)
        return [items[0] if items else ()]

    def visit_call_or_var(self, node, children):
        items = _flat(children)
        name = items[0].text
        if len(items) == 1:
            return Var(name)
        return Call(Var("this"), name, tuple(items[1]))

    def visit_paren(self, node, children):
        return _flat(children)[0]

    def visit_seq_lit(self, node, children):
        items = _flat(children)
        return SeqLit(tuple(items[0]) if items else ())

    def visit_old_expr(self, node, children):
        return Old(Var(_flat(children)[0].text))

    def visit_new_expr(self, node, children):
        items = _flat(children)
        return New(items[0].text, tuple(items[1]) if len(items) > 1 else ())

    def visit_elseif_expr(self, node, children):
        cond, value = _flat(children)
        return _Elseif(as_expr(cond), as_expr(value))

    def visit_if_expr(self, node, children):
        items = _flat(children)
        cond, then = as_expr(items[0]), as_expr(items[1])
        middle, orelse = items[2:-1], as_expr(items[-1])
        for part in reversed(middle):
            orelse = IfExpr(part.cond, part.value, orelse)
        return IfExpr(cond, then, orelse)

    def visit_int_range(self, node, children):
        lo, hi = (int(t.text) for t in _flat(children))
        if lo > hi:
            raise self._error(node, f"empty integer range [{lo},{hi}]")
        return IntRange(lo, hi)

    def visit_indices_domain(self, node, children):
        return SeqIndices(as_expr(_flat(children)[0]))

    def visit_sort_domain(self, node, children):
        return TypeDomain(node.value.strip())

    def visit_domain(self, node, children):
        d = _flat(children)[0]
        if isinstance(d, (IntRange, SeqIndices, TypeDomain, SeqElems)):
            return d
        return SeqElems(as_expr(d))

    def visit_binder_in(self, node, children):
        name, d = _flat(children)
        return _Binder(name.text, d, None)

    def visit_binder_typed(self, node, children):
        type_name, name = _flat(children)
        return _Binder(name.text, None, type_name.text)

    def visit_quantified(self, node, children):
        kw, binder, body = _flat(children)
        body = as_predicate(body)
        d = binder.domain
        if d is None:
            d = TypeDomain(sort_of(binder.typed))
            # forall T n: s.contains(n) ==> P reads as a quantifier over s
            if isinstance(body, Implies) and isinstance(body.lhs, Atom):
                guard = body.lhs.expr
                if (isinstance(guard, SeqOp) and guard.op == "contains"
                        and guard.index == Var(binder.name) and kw.text == "forall"):
                    d, body = SeqElems(guard.receiver), body.rhs
        cls = Forall if kw.text == "forall" else Exists
        return cls(binder.name, d, body)

    def visit_predicate_file(self, node, children):
        return _flat(children)[0]

    # statements
    def visit_stmt_block(self, node, children):
        return sequence([c for c in _flat(children) if isinstance(c, Statement)])

    def visit_statement_file(self, node, children):
        return sequence([c for c in _flat(children) if isinstance(c, Statement)])

    def visit_skip_stmt(self, node, children):
        return Skip()

    def visit_block_stmt(self, node, children):
        return BlockRef(_flat(children)[0].text, TrueP(), TrueP())

    def visit_loop_stmt(self, node, children):
        inv, variant, guard_, body = _flat(children)
        return Repeat(as_predicate(inv), as_expr(variant), as_expr(guard_), body)

    def visit_elseif_stmt(self, node, children):
        cond, body = _flat(children)
        return _Elseif(as_expr(cond), body)

    def visit_else_stmt(self, node, children):
        return [_Elseif(None, _flat(children)[0])]

    def visit_if_stmt(self, node, children):
        items = _flat(children)
        arms = [_Elseif(as_expr(items[0]), items[1])] + [p for p in items[2:] if p.cond is not None]
        orelse = next((p.value for p in items[2:] if p.cond is None), Skip())
        return if_chain(arms, orelse)

    def visit_when_clause(self, node, children):
        cond, body = _flat(children)
        return _Elseif(as_expr(cond), body)

    def visit_choose_stmt(self, node, children):
        return Select(tuple((w.cond, w.value) for w in _flat(children)))

    def visit_decl_stmt(self, node, children):
        sort, name, init = _flat(children)
        return LocalDecl(name.text, sort.text, as_expr(init))

    def visit_target(self, node, children):
        t = _flat(children)[0]
        return Tok("target", RESULT if isinstance(t, Result) else t.text)

    def visit_call_stmt(self, node, children):
        tgt, method, args = _flat(children)
        return MethodCallStmt(method.text, tuple(args), tgt.text)

    def visit_assign_stmt(self, node, children):
        tgt, value = _flat(children)
        return Assign(tgt.text, as_expr(value))

    # refinement scripts
    def visit_param(self, node, children):
        sort, name = _flat(children)
        return Tok("param", f"{name.text}:{sort.text}")

    visit_typed_param = visit_param

    def visit_params(self, node, children):
        return [tuple(tuple(t.text.split(":", 1)) for t in _flat(children))]

    visit_typed_params = visit_params

    def visit_modifies(self, node, children):
        return _Annotation("modifies", _flat(children)[0])

    def visit_requires(self, node, children):
        return _Annotation("pre", as_predicate(_flat(children)[0]))

    def visit_ensures(self, node, children):
        return _Annotation("post", as_predicate(_flat(children)[0]))

    def visit_guard(self, node, children):
        return _Annotation("guard", as_expr(_flat(children)[0]))

    def visit_invariant_part(self, node, children):
        return _Annotation("invariant", as_predicate(_flat(children)[0]))

    def visit_variant_part(self, node, children):
        return _Annotation("variant", as_expr(_flat(children)[0]))

    def visit_guard_part(self, node, children):
        return _Annotation("guard", as_expr(_flat(children)[0]))

    def visit_assignment_rule(self, node, children):
        tgt, value = _flat(children)
        return ("assignment", {"target": tgt.text, "value": as_expr(value)})

    def visit_declare_rule(self, node, children):
        sort, name, init = _flat(children)
        return ("declare", {"name": name.text, "type": sort.text, "init": as_expr(init)})

    def visit_composition_rule(self, node, children):
        return ("composition", {"mid": as_predicate(_flat(children)[0])})

    def visit_selection_rule(self, node, children):
        return ("selection", {"guards": tuple(a.value for a in _flat(children))})

    def visit_repetition_rule(self, node, children):
        parts = {a.key: a.value for a in _flat(children)}
        return ("repetition", parts)

    def visit_weaken_rule(self, node, children):
        return ("weaken", {"pre": as_predicate(_flat(children)[0])})

    def visit_strengthen_rule(self, node, children):
        return ("strengthen", {"post": as_predicate(_flat(children)[0])})

    def visit_call_rule(self, node, children):
        tgt, method, args = _flat(children)
        return ("call", {"target": tgt.text, "method": method.text, "args": tuple(args)})

    def visit_block_rule(self, node, children):
        return ("block", {"name": _flat(children)[0].text})

    def visit_rule(self, node, children):
        r = _flat(children)[0]
        if isinstance(r, Tok):
            return ("skip", {})
        return r

    def visit_refine_step(self, node, children):
        node_id, (rule_name, args) = _flat(children)
        return RefineStep(node_id.text, rule_name, args, self._line(node))

    def visit_method_unit(self, node, children):
        items = _flat(children)
        ret, name = items[0], items[1]
        rest = items[2:]
        ps = rest.pop(0) if rest and isinstance(rest[0], tuple) and not isinstance(rest[0], _Annotation) else ()
        pre = next(a.value for a in rest if isinstance(a, _Annotation) and a.key == "pre")
        post = next(a.value for a in rest if isinstance(a, _Annotation) and a.key == "post")
        steps = tuple(s for s in rest if isinstance(s, RefineStep))
        try:
            contract = Contract(pre, post)
        except CbcError as exc:
            raise self._error(node, exc.detail)
        state = next((a.value for a in rest if isinstance(a, _Annotation) and a.key == "modifies"), ())
        return MethodScript(name.text, ret.text, ps, contract, steps, state, self._line(node))

    def visit_id_list(self, node, children):
        out = []
        for c in _flat(children):
            out.append(RESULT if isinstance(c, Result) else c.text)
        return [tuple(out)]

    def visit_accessible(self, node, children):
        items = _flat(children)
        return _Annotation("accessible", items[0] if items else ())

    def visit_assignable(self, node, children):
        items = _flat(children)
        return _Annotation("assignable", items[0] if items else ())

    def visit_block_def(self, node, children):
        items = _flat(children)
        name = items[0].text
        notes = {a.key: a.value for a in items if isinstance(a, _Annotation)}
        body = next((s for s in items if isinstance(s, Statement)), Skip())
        try:
            contract = Contract(notes["pre"], notes["post"])
        except CbcError as exc:
            raise self._error(node, exc.detail)
        return BlockScript(name, contract, notes.get("accessible", ()), notes.get("assignable", ()),
                           body, self._line(node))

    def visit_cbc_file(self, node, children):
        items = _flat(children)
        return CbcScript(tuple(m for m in items if isinstance(m, MethodScript)),
                         tuple(b for b in items if isinstance(b, BlockScript)), self.source)

    # trait files
    def visit_pre_ann(self, node, children):
        return _Annotation("pre", as_predicate(_flat(children)[0]))

    def visit_post_ann(self, node, children):
        return _Annotation("post", as_predicate(_flat(children)[0]))

    def visit_measure_ann(self, node, children):
        return _Annotation("measure", as_expr(_flat(children)[0], "measure"))

    def visit_method_body(self, node, children):
        return _Annotation("body", as_expr(_flat(children)[0], "method body"))

    def visit_method_def(self, node, children):
        items = _flat(children)
        notes = {a.key: a.value for a in items if isinstance(a, _Annotation)}
        toks = [t for t in items if isinstance(t, Tok)]
        is_abstract = bool(toks) and toks[0].kind == "abstract"
        if is_abstract:
            toks = toks[1:]
        ret, name = toks[0], toks[1]
        ps = next((p for p in items if isinstance(p, tuple) and not isinstance(p, (Tok, _Annotation))), ())
        body = notes.get("body")
        if is_abstract and body is not None:
            raise self._error(node, f"abstract method {name.text} has a body")
        try:
            spec = Contract(notes.get("pre", TrueP()), notes.get("post", TrueP()))
        except CbcError as exc:
            raise self._error(node, exc.detail)
        return Method(spec, ret.text, name.text, ps, body, notes.get("measure"))

    def visit_implements(self, node, children):
        return _Annotation("implements", tuple(t.text for t in _flat(children)))

    def visit_body_lit(self, node, children):
        items = _flat(children)
        return Lit(_body(items))

    def visit_body_decl(self, node, children):
        items = _flat(children)
        kind, name = items[0].text, items[1].text
        body = _body(items[2:], is_interface=kind == "interface")
        # interfaces are never instantiated, so they flatten like traits
        return TraitDecl(name, CLASS if kind == "class" else TRAIT, Lit(body), self.source)

    def visit_make_abstract(self, node, children):
        return _Annotation("makeAbstract", _flat(children)[0].text)

    def visit_trait_term(self, node, children):
        items = _flat(children)
        out = items[0]
        for m in items[1:]:
            out = MakeAbstract(out, m.value)
        return out

    def visit_trait_expr(self, node, children):
        items = _flat(children)
        out = items[0]
        for x in items[1:]:
            out = Plus(out, x)
        return out

    def visit_trait_paren(self, node, children):
        return _flat(children)[0]

    def visit_trait_atom(self, node, children):
        x = _flat(children)[0]
        return Ref(x.text) if isinstance(x, Tok) else x

    def visit_expr_decl(self, node, children):
        items = _flat(children)
        kind = TRAIT
        if items[0].kind == "kind":
            if items[0].text == "interface":
                raise self._error(node, "an interface must be given as a body")
            kind = items.pop(0).text
        return TraitDecl(items[0].text, kind, items[1], self.source)

    def visit_trait_decl(self, node, children):
        return _flat(children)[0]

    def visit_trait_file(self, node, children):
        return TraitTable(tuple(d for d in _flat(children) if isinstance(d, TraitDecl)))


def _body(items, is_interface: bool = False) -> Body:
    interfaces: Tuple[str, ...] = ()
    methods: List[Method] = []
    for x in items:
        if isinstance(x, Tok) and x.kind == "interface":
            is_interface = True
        elif isinstance(x, _Annotation) and x.key == "implements":
            interfaces = x.value
        elif isinstance(x, Method):
            methods.append(x)
    return Body(is_interface, interfaces, tuple(methods))


def sequence(items: Sequence[Statement]) -> Statement:
    if not items:
        return Skip()
    out = items[-1]
    for s in reversed(items[:-1]):
        out = Seq(s, out)
    return out


def if_chain(arms, orelse: Statement) -> Select:
    """if/elseif/else as a selection whose guards exclude earlier arms."""
    branches = []
    seen: List[Expr] = []
    for arm in arms:
        g = arm.cond
        for earlier in reversed(seen):
            g = Binary("&&", Not(earlier), g)
        branches.append((g, arm.value))
        seen.append(arm.cond)
    rest = Not(seen[-1])
    for earlier in reversed(seen[:-1]):
        rest = Binary("&&", Not(earlier), rest)
    branches.append((rest, orelse))
    return Select(tuple(branches))


# ────── entry points ──────

@lru_cache(maxsize=None)
def _parser(root_name: str) -> ParserPython:
    return ParserPython(globals()[root_name], comment, autokwd=True)


def _parse(root_name: str, text: str, source: Opt[str]):
    source = source or "<input>"
    parser = _parser(root_name)
    try:
        tree = parser.parse(text)
    except NoMatch as exc:
        line, col = getattr(exc, "line", 0), getattr(exc, "col", 0)
        raise ParseError(f"syntax error, expected {_expected(exc)}", line, col, source) from None
    try:
        return visit_parse_tree(tree, CbcVisitor(parser, source))
    except ParseError:
        raise
    except CbcError as exc:
        raise ParseError(exc.detail, 0, 0, source) from None


def _expected(exc: NoMatch) -> str:
    rules = getattr(exc, "rules", None) or []
    names = sorted({getattr(r, "rule_name", "") or str(r) for r in rules})
    return ", ".join(names) or "valid input"


def parse_predicate(text: str, source: Opt[str] = None) -> Predicate:
    return as_predicate(_parse("predicate_file", text, source))


def parse_expr(text: str, source: Opt[str] = None) -> Expr:
    out = _parse("predicate_file", text, source)
    try:
        return as_expr(out)
    except CbcError as exc:
        raise ParseError(exc.detail, 1, 1, source) from None


def parse_statements(text: str, source: Opt[str] = None) -> Statement:
    return _parse("statement_file", text, source)


def parse_cbc(text: str, source: Opt[str] = None) -> CbcScript:
    return _parse("cbc_file", text, source)


def parse_traits(text: str, source: Opt[str] = None) -> TraitTable:
    return _parse("trait_file", text, source)


# ────── printers ──────

_PREC = {"||": 2, "&&": 3, "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "div": 6}
_UNARY, _POSTFIX, _ATOM = 7, 8, 9


def _wrap(text: str, prec: int, need: int) -> str:
    return f"({text})" if prec < need else text


def show_expr(e: Expr, need: int = 0) -> str:
    if isinstance(e, IntLit):
        return _wrap(str(e.value), _UNARY if e.value < 0 else _ATOM, need)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Result):
        return RESULT
    if isinstance(e, Old):
        return f"old({e.inner.name})"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if p == 4:
            text = f"{show_expr(e.lhs, 5)} {e.op} {show_expr(e.rhs, 5)}"
        else:
            text = f"{show_expr(e.lhs, p)} {e.op} {show_expr(e.rhs, p + 1)}"
        return _wrap(text, p, need)
    if isinstance(e, Not):
        return _wrap("!" + show_expr(e.inner, _UNARY), _UNARY, need)
    if isinstance(e, SeqLit):
        return "[" + ", ".join(show_expr(x) for x in e.elems) + "]"
    if isinstance(e, SeqOp):
        arg = "" if e.index is None else show_expr(e.index)
        return f"{show_expr(e.receiver, _POSTFIX)}.{e.op}({arg})"
    if isinstance(e, Call):
        args = ", ".join(show_expr(a) for a in e.args)
        if e.receiver == Var("this"):
            return f"{e.method}({args})"
        return f"{show_expr(e.receiver, _POSTFIX)}.{e.method}({args})"
    if isinstance(e, New):
        return f"new {e.cls}(" + ", ".join(show_expr(a) for a in e.args) + ")"
    if isinstance(e, IfExpr):
        parts = [f"if ({show_expr(e.cond)}) {{{show_expr(e.then)}}}"]
        rest = e.orelse
        while isinstance(rest, IfExpr):
            parts.append(f"elseif ({show_expr(rest.cond)}) {{{show_expr(rest.then)}}}")
            rest = rest.orelse
        parts.append(f"else {{{show_expr(rest)}}}")
        return " ".join(parts)
    if isinstance(e, TypeTest):
        return f"({show_expr(e.inner)} : {e.cls})"
    raise CbcError(f"cannot print {type(e).__name__}")


def show_domain(d) -> str:
    if isinstance(d, IntRange):
        return f"[{d.lo}, {d.hi}]"
    if isinstance(d, SeqIndices):
        return f"indices({show_expr(d.seq)})"
    if isinstance(d, TypeDomain):
        return d.type_name
    text = show_expr(d.seq, _POSTFIX)
    if not isinstance(d.seq, (Var, SeqOp, Call)):
        text = f"({show_expr(d.seq)})"
    return text


def show_predicate(p: Predicate, need: int = 0) -> str:
    if isinstance(p, TrueP):
        return "true"
    if isinstance(p, FalseP):
        return "false"
    if isinstance(p, Atom):
        return show_expr(p.expr, need)
    if isinstance(p, AndP):
        return _wrap(" && ".join(show_predicate(q, 4) for q in p.items), 3, need)
    if isinstance(p, OrP):
        return _wrap(" || ".join(show_predicate(q, 3) for q in p.items), 2, need)
    if isinstance(p, NotP):
        return _wrap("!" + show_predicate(p.inner, _UNARY), _UNARY, need)
    if isinstance(p, Implies):
        return _wrap(f"{show_predicate(p.lhs, 2)} ==> {show_predicate(p.rhs, 1)}", 1, need)
    if isinstance(p, Quantifier):
        kw = "forall" if isinstance(p, Forall) else "exists"
        return _wrap(f"{kw} {p.var} in {show_domain(p.domain)}: {show_predicate(p.body)}", 0, need)
    raise CbcError(f"cannot print {type(p).__name__}")


def show_contract(c: Contract) -> str:
    return f"{{{show_predicate(c.pre)}}} . {{{show_predicate(c.post)}}}"


def _as_if_chain(s: Select):
    """Arms and else-branch when ``s`` has the shape printed by if/elseif/else."""
    arms: List[Tuple[Expr, Statement]] = []
    seen: List[Expr] = []
    for k, (g, body) in enumerate(s.branches):
        last = k == len(s.branches) - 1
        expected_prefix = list(seen)
        if last:
            if not seen:
                return None
            rest = Not(seen[-1])
            for earlier in reversed(seen[:-1]):
                rest = Binary("&&", Not(earlier), rest)
            return (arms, body) if g == rest else None
        cond = g
        for earlier in expected_prefix:
            if not (isinstance(cond, Binary) and cond.op == "&&" and cond.lhs == Not(earlier)):
                return None
            cond = cond.rhs
        arms.append((cond, body))
        seen.append(cond)
    return None


def show_statement(s: Statement, indent: int = 0) -> str:
    return "\n".join(_statement_lines(s, indent))


def _block(s: Statement, indent: int) -> List[str]:
    return _statement_lines(s, indent + 1)


def _statement_lines(s: Statement, indent: int) -> List[str]:
    pad = "    " * indent
    if isinstance(s, Skip):
        return [pad + "skip;"]
    if isinstance(s, Assign):
        return [f"{pad}{s.target} = {show_expr(s.value)};"]
    if isinstance(s, LocalDecl):
        return [f"{pad}{s.type} {s.name} = {show_expr(s.init)};"]
    if isinstance(s, MethodCallStmt):
        return [f"{pad}{s.target} = {s.method}(" + ", ".join(show_expr(a) for a in s.args) + ");"]
    if isinstance(s, Seq):
        return _statement_lines(s.first, indent) + _statement_lines(s.second, indent)
    if isinstance(s, Abstract):
        return [f"{pad}⟨abstract {s.id}⟩"]
    if isinstance(s, BlockRef):
        return [f"{pad}block {s.name};"]
    if isinstance(s, Repeat):
        return ([f"{pad}loop_invariant {show_predicate(s.invariant)};",
                 f"{pad}decreases {show_expr(s.variant)};",
                 f"{pad}while ({show_expr(s.guard)}) {{"]
                + _block(s.body, indent) + [pad + "}"])
    if isinstance(s, Select):
        shape = _as_if_chain(s)
        if shape is not None:
            arms, orelse = shape
            lines: List[str] = []
            for k, (g, body) in enumerate(arms):
                head = "if" if k == 0 else "} elseif"
                lines.append(f"{pad}{head} ({show_expr(g)}) {{")
                lines += _block(body, indent)
            if not isinstance(orelse, Skip):
                lines.append(pad + "} else {")
                lines += _block(orelse, indent)
            lines.append(pad + "}")
            return lines
        lines = [pad + "choose {"]
        for g, body in s.branches:
            lines.append(f"{pad}    when ({show_expr(g)}) {{")
            lines += _block(body, indent + 1)
            lines.append(pad + "    }")
        lines.append(pad + "}")
        return lines
    raise CbcError(f"cannot print {type(s).__name__}")


def show_method(m: Method, indent: int = 1) -> str:
    pad = "    " * indent
    lines = []
    if not isinstance(m.spec.pre, TrueP):
        lines.append(f"{pad}@Pre: {show_predicate(m.spec.pre)}")
    if not isinstance(m.spec.post, TrueP):
        lines.append(f"{pad}@Post: {show_predicate(m.spec.post)}")
    if m.measure is not None:
        lines.append(f"{pad}@Measure: {show_expr(m.measure)}")
    params_text = ", ".join(f"{t} {n}" for n, t in m.params)
    head = f"{m.return_type} {m.name}({params_text})"
    if m.is_abstract:
        lines.append(f"{pad}abstract {head};")
    else:
        lines.append(f"{pad}{head} = {show_expr(m.body)}")
    return "\n".join(lines)


def show_body(b: Body, name: Opt[str] = None, kind: str = TRAIT) -> str:
    head = "interface" if b.is_interface and name is not None else kind
    implements_text = f" implements {', '.join(b.interfaces)}" if b.interfaces else ""
    methods = "\n\n".join(show_method(m) for m in b.methods)
    inner = f"\n{methods}\n" if methods else "\n"
    if name is None:
        flag = "interface " if b.is_interface else ""
        return f"{{ {flag}{implements_text.strip()}{inner}}}"
    return f"{head} {name}{implements_text} {{{inner}}}"


def show_trait_expr(e: TraitExpr) -> str:
    if isinstance(e, Ref):
        return e.trait
    if isinstance(e, Plus):
        rhs = show_trait_expr(e.rhs)
        if isinstance(e.rhs, Plus):
            rhs = f"({rhs})"
        return f"{show_trait_expr(e.lhs)} + {rhs}"
    if isinstance(e, MakeAbstract):
        inner = show_trait_expr(e.inner)
        if isinstance(e.inner, Plus):
            inner = f"({inner})"
        return f"{inner}[makeAbstract {e.method}]"
    if isinstance(e, Lit):
        return show_body(e.body)
    raise CbcError(f"cannot print {type(e).__name__}")


def show_decl(d: TraitDecl) -> str:
    if isinstance(d.expr, Lit):
        return show_body(d.expr.body, d.name, d.kind)
    return f"{d.kind} {d.name} = {show_trait_expr(d.expr)}"
