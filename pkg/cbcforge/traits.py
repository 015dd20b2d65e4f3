"""Trait tables: well-formedness, typing with verification, composition and flattening.

A method body is typed to a value term together with the knowledge gathered
about the calls it makes and the obligation those calls impose. Calls to
methods with parameters are named by fresh variables constrained by the
callee's contract in implication form; getters stay as calls so that values
built with ``new`` answer them directly.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

from cbcforge.calculus import CLASS, Body, Lit, MakeAbstract, Method, Plus, Ref, TraitDecl, TraitExpr, TraitTable
from cbcforge.errors import (
    CbcError, ConflictError, FlattenError, SignatureMismatch, SpecIncompatible, TraitError, TypingError,
)
from cbcforge.kernel import (
    BOOL, INT, RESULT, SEQ, Binary, BoolLit, Call, Expr, IfExpr, IntLit, New, Not, Old, Predicate, Result, SeqLit,
    SeqOp, TrueP, TypeTest, Var, conj, eq, free_vars, fresh_name, implies, lift, map_exprs, negate, resolve_old,
    sort_of, substitute_all,
)
from cbcforge.logging_module import logger
from cbcforge.prover import (
    Invalid, Obligation, ProofResult, RecordShape, Valid, check_implication, discharge_all, render_result,
)
from cbcforge.schemas import ProverConfig
from cbcforge.syntax import parse_traits, show_predicate

THIS = "this"

PRELUDE_SOURCE = """
class Num {}
class Bool {}
interface List {}
class Nil implements List {}
class Cons implements List {
  abstract Num element();
  abstract List tail();
}
"""

SEQ_RESULTS = {"size": "Num", "get": "Num", "contains": "Bool", "element": "Num", "tail": "List"}


@lru_cache(maxsize=None)
def prelude() -> TraitTable:
    return parse_traits(PRELUDE_SOURCE, "<prelude>")


def prelude_names() -> Tuple[str, ...]:
    return prelude().names


class Diagnostic(NamedTuple):
    where: str
    message: str
    counterexample: Optional[Tuple[Tuple[str, object], ...]] = None
    obligation: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.where}: {self.message}"


# ────── well-formedness ──────

def _refs(e: TraitExpr) -> List[str]:
    if isinstance(e, Ref):
        return [e.trait]
    if isinstance(e, Plus):
        return _refs(e.lhs) + _refs(e.rhs)
    if isinstance(e, MakeAbstract):
        return _refs(e.inner)
    return []


def _lits(e: TraitExpr) -> List[Body]:
    if isinstance(e, Lit):
        return [e.body]
    if isinstance(e, Plus):
        return _lits(e.lhs) + _lits(e.rhs)
    if isinstance(e, MakeAbstract):
        return _lits(e.inner)
    return []


def _where(d: TraitDecl, method: Optional[str] = None) -> str:
    at = f"{d.origin}: {d.name}" if d.origin else d.name
    return f"{at}.{method}" if method else at


def _cycles(graph: Mapping[str, Sequence[str]]) -> List[List[str]]:
    found, state = [], {}

    def visit(u: str, path: List[str]):
        state[u] = "active"
        for v in graph.get(u, ()):
            if state.get(v) == "active":
                found.append(path[path.index(v):] + [v])
            elif v not in state and v in graph:
                visit(v, path + [v])
        state[u] = "done"

    for name in graph:
        if name not in state:
            visit(name, [name])
    return found


def _body_diagnostics(d: TraitDecl, body: Body, known: Set[str], kinds: Mapping[str, str]) -> List[Diagnostic]:
    out = []
    if d.kind == CLASS and body.is_interface:
        out.append(Diagnostic(_where(d), "a class cannot be an interface"))
    seen: Set[str] = set()
    for i in body.interfaces:
        if i in seen:
            out.append(Diagnostic(_where(d), f"interface {i} listed twice"))
        seen.add(i)
        if i not in known:
            out.append(Diagnostic(_where(d), f"unknown interface {i}"))
    names: Set[str] = set()
    for m in body.methods:
        where = _where(d, m.name)
        if m.name in names:
            out.append(Diagnostic(where, f"method {m.name} defined twice"))
        names.add(m.name)
        if body.is_interface and not m.is_abstract:
            out.append(Diagnostic(where, "interface methods must be abstract"))
        params: Set[str] = set()
        for p, t in m.params:
            if p == THIS:
                out.append(Diagnostic(where, "a parameter cannot be called this"))
            if p in params:
                out.append(Diagnostic(where, f"parameter {p} declared twice"))
            params.add(p)
            if t not in known:
                out.append(Diagnostic(where, f"unknown class {t}"))
        if m.return_type not in known:
            out.append(Diagnostic(where, f"unknown class {m.return_type}"))
    return out


def well_formed(ds: TraitTable) -> List[Diagnostic]:
    """Every violation of the table invariants, one diagnostic each; empty means well formed."""
    out: List[Diagnostic] = []
    builtin = set(prelude_names())
    kinds = {d.name: d.kind for d in prelude()}
    seen: Set[str] = set()
    for d in ds:
        if d.name in builtin:
            out.append(Diagnostic(_where(d), f"redefines built-in {d.name}"))
        elif d.name in seen:
            out.append(Diagnostic(_where(d), f"{d.name} is declared twice"))
        seen.add(d.name)
        kinds.setdefault(d.name, d.kind)
    known = builtin | seen
    graph: Dict[str, List[str]] = {}
    for d in ds:
        graph.setdefault(d.name, [])
        for r in _refs(d.expr):
            if r not in known:
                out.append(Diagnostic(_where(d), f"unknown trait {r}"))
            elif kinds.get(r) == CLASS:
                out.append(Diagnostic(_where(d), f"{r} is a class and cannot be composed"))
            else:
                graph[d.name].append(r)
        for body in _lits(d.expr):
            out.extend(_body_diagnostics(d, body, known, kinds))
    origin = {d.name: d for d in ds}
    for cycle in _cycles(graph):
        out.append(Diagnostic(_where(origin[cycle[0]]), f"circular trait definition {' -> '.join(cycle)}"))
    return out


# ────── flattened tables ──────

@dataclass
class FlatTable:
    bodies: Dict[str, Body] = field(default_factory=dict)
    kinds: Dict[str, str] = field(default_factory=dict)

    def body(self, name: str) -> Body:
        if name not in self.bodies:
            raise TypingError(f"unknown class {name}")
        return self.bodies[name]

    def method(self, cls: str, name: str) -> Optional[Method]:
        return self.body(cls).method(name)

    def is_class(self, name: str) -> bool:
        return self.kinds.get(name) == CLASS

    def supers(self, name: str) -> FrozenSet[str]:
        out: Set[str] = set()
        todo = list(self.bodies[name].interfaces) if name in self.bodies else []
        while todo:
            i = todo.pop()
            if i in out:
                continue
            out.add(i)
            if i in self.bodies:
                todo.extend(self.bodies[i].interfaces)
        return frozenset(out)

    def is_subtype(self, sub: str, sup: str) -> bool:
        return sub == sup or sup in self.supers(sub)

    def records(self) -> Tuple[RecordShape, ...]:
        builtin = set(prelude_names())
        out = []
        for name, body in self.bodies.items():
            if name in builtin:
                continue
            fields = tuple((g.name, g.return_type) for g in body.getters())
            out.append(RecordShape(name, fields, tuple(sorted(self.supers(name))), body.is_interface))
        return tuple(out)


# ────── typing ──────

@dataclass(frozen=True)
class Typed:
    cls: str
    value: Expr
    knowledge: Predicate = TrueP()
    obligation: Predicate = TrueP()
    measure: Predicate = TrueP()


class Judgement(NamedTuple):
    type: str
    knowledge: Predicate
    obligation: Predicate


def _size_positive(seq: Expr) -> Predicate:
    return lift(Binary(">", SeqOp("size", seq), IntLit(0)))


class Typer:
    """Types one method body under ``gamma``.

    Calls with identical receiver, method and argument terms share one result
    variable within the branch they occur in. ``measures`` names the methods
    of the same recursion cycle; calls to them on ``this`` must decrease
    ``current``.
    """

    def __init__(self, table: FlatTable, gamma: Mapping[str, str], used: Iterable[str] = (),
                 measures: Optional[Mapping[str, Expr]] = None, current: Optional[Expr] = None):
        self.table = table
        self.gamma = dict(gamma)
        self.fresh: Dict[str, str] = {}
        self.used = set(gamma) | set(used) | {RESULT, THIS}
        self.measures = dict(measures or {})
        self.current = current

    def expr(self, e: Expr) -> Typed:
        return self._type(e, {})

    def _expect(self, t: Typed, want: str, what: str) -> Typed:
        if not self.table.is_subtype(t.cls, want):
            raise TypingError(f"{what}: expected {want}, found {t.cls}")
        return t

    def _type(self, e: Expr, cache: Dict) -> Typed:
        if isinstance(e, IntLit):
            return Typed("Num", e)
        if isinstance(e, BoolLit):
            return Typed("Bool", e)
        if isinstance(e, Var):
            if e.name not in self.gamma:
                raise TypingError(f"unknown variable {e.name}")
            return Typed(self.gamma[e.name], e)
        if isinstance(e, (Old, Result)):
            raise TypingError(f"{type(e).__name__.lower()} cannot occur in a method body")
        if isinstance(e, Not):
            inner = self._expect(self._type(e.inner, cache), "Bool", "negation")
            return replace(inner, cls="Bool", value=Not(inner.value))
        if isinstance(e, TypeTest):
            inner = self._type(e.inner, cache)
            return replace(inner, cls="Bool", value=TypeTest(inner.value, e.cls))
        if isinstance(e, Binary):
            return self._binary(e, cache)
        if isinstance(e, SeqLit):
            elems = [self._expect(self._type(x, cache), "Num", "list element") for x in e.elems]
            return Typed("List", SeqLit(tuple(t.value for t in elems)), *_merge(elems))
        if isinstance(e, SeqOp):
            return self._seq_op(e, cache)
        if isinstance(e, IfExpr):
            return self._if(e, cache)
        if isinstance(e, Call):
            return self._call(e, cache)
        if isinstance(e, New):
            return self._new(e, cache)
        raise TypingError(f"{type(e).__name__} cannot occur in a method body")

    def _binary(self, e: Binary, cache: Dict) -> Typed:
        lhs = self._type(e.lhs, cache)
        if e.op in ("&&", "||"):
            self._expect(lhs, "Bool", e.op)
            rhs = self._expect(self._type(e.rhs, dict(cache)), "Bool", e.op)
            when = lift(lhs.value) if e.op == "&&" else negate(lift(lhs.value))
            return Typed("Bool", Binary(e.op, lhs.value, rhs.value),
                         conj(lhs.knowledge, implies(when, rhs.knowledge)),
                         conj(lhs.obligation, implies(when, rhs.obligation)),
                         conj(lhs.measure, implies(when, rhs.measure)))
        rhs = self._type(e.rhs, cache)
        k, o, m = _merge([lhs, rhs])
        value = Binary(e.op, lhs.value, rhs.value)
        if e.op in ("==", "!="):
            if not self._comparable(lhs.cls, rhs.cls):
                raise TypingError(f"cannot compare {lhs.cls} with {rhs.cls}")
            return Typed("Bool", value, k, o, m)
        self._expect(lhs, "Num", e.op)
        self._expect(rhs, "Num", e.op)
        if e.op == "div":
            o = conj(o, lift(Binary("!=", rhs.value, IntLit(0))))
        return Typed("Num" if e.op in ("+", "-", "*", "div") else "Bool", value, k, o, m)

    def _comparable(self, a: str, b: str) -> bool:
        if self.table.is_subtype(a, b) or self.table.is_subtype(b, a):
            return True
        return sort_of(a) == sort_of(b) and sort_of(a) in (INT, BOOL, SEQ)

    def _seq_op(self, e: SeqOp, cache: Dict) -> Typed:
        recv = self._expect(self._type(e.receiver, cache), "List", f"{e.op}()")
        parts = [recv]
        need: Predicate = TrueP()
        if e.index is not None:
            index = self._type(e.index, cache)
            if e.op == "get":
                self._expect(index, "Num", "get()")
                size = SeqOp("size", recv.value)
                need = conj(lift(Binary("<=", IntLit(0), index.value)), lift(Binary("<", index.value, size)))
            else:
                self._expect(index, "Num", f"{e.op}()")
            parts.append(index)
        elif e.op in ("element", "tail"):
            need = _size_positive(recv.value)
        k, o, m = _merge(parts)
        value = SeqOp(e.op, recv.value, parts[1].value if len(parts) > 1 else None)
        return Typed(SEQ_RESULTS[e.op], value, k, conj(o, need), m)

    def _join(self, a: str, b: str) -> str:
        if self.table.is_subtype(a, b):
            return b
        if self.table.is_subtype(b, a):
            return a
        if self.table.is_subtype(a, "List") and self.table.is_subtype(b, "List"):
            return "List"
        raise TypingError(f"branches have unrelated types {a} and {b}")

    def _if(self, e: IfExpr, cache: Dict) -> Typed:
        cond = self._expect(self._type(e.cond, cache), "Bool", "if condition")
        then = self._type(e.then, dict(cache))
        orelse = self._type(e.orelse, dict(cache))
        g = lift(cond.value)

        def split(a: Predicate, b: Predicate) -> Predicate:
            return conj(implies(g, a), implies(negate(g), b))

        return Typed(self._join(then.cls, orelse.cls), IfExpr(cond.value, then.value, orelse.value),
                     conj(cond.knowledge, split(then.knowledge, orelse.knowledge)),
                     conj(cond.obligation, split(then.obligation, orelse.obligation)),
                     conj(cond.measure, split(then.measure, orelse.measure)))

    def _call(self, e: Call, cache: Dict) -> Typed:
        recv = self._type(e.receiver, cache)
        args = [self._type(a, cache) for a in e.args]
        if recv.cls not in self.table.bodies:
            raise TypingError(f"unknown class {recv.cls}")
        header = self.table.method(recv.cls, e.method)
        if header is None:
            raise TypingError(f"{recv.cls} has no method {e.method}")
        if len(args) != len(header.params):
            raise TypingError(f"{recv.cls}.{e.method} takes {len(header.params)} argument(s), got {len(args)}")
        for (p, t), a in zip(header.params, args):
            self._expect(a, t, f"argument {p} of {e.method}")
        actual = {THIS: recv.value, **{p: a.value for p, a in zip(header.param_names, args)}}
        pre = substitute_all(resolve_old(header.spec.pre), actual)
        if header.is_getter():
            value: Expr = Call(recv.value, e.method, ())
        else:
            key = (recv.cls, e.method, recv.value, tuple(a.value for a in args))
            if key not in cache:
                name = fresh_name(e.method, self.used)
                self.used.add(name)
                self.fresh[name] = header.return_type
                cache[key] = Var(name)
            value = cache[key]
        post = substitute_all(resolve_old(header.spec.post), {**actual, RESULT: value})
        k, o, m = _merge([recv] + args)
        if recv.value == Var(THIS) and e.method in self.measures and self.current is not None:
            bound = substitute_all(self.measures[e.method], actual)
            m = conj(m, lift(Binary("<=", IntLit(0), bound)), lift(Binary("<", bound, self.current)))
        return Typed(header.return_type, value, conj(k, implies(pre, post)), conj(o, pre), m)

    def _new(self, e: New, cache: Dict) -> Typed:
        if not self.table.is_class(e.cls):
            raise TypingError(f"{e.cls} is not an instantiable class")
        getters = self.table.body(e.cls).getters()
        args = [self._type(a, cache) for a in e.args]
        if len(args) != len(getters):
            raise TypingError(f"new {e.cls}() takes {len(getters)} argument(s), got {len(args)}")
        for g, a in zip(getters, args):
            self._expect(a, g.return_type, f"field {g.name} of {e.cls}")
        value = New(e.cls, tuple(a.value for a in args))
        k, o, m = _merge(args)
        for g, a in zip(getters, args):
            pre = substitute_all(resolve_old(g.spec.pre), {THIS: value})
            k = conj(k, implies(pre, eq(Call(value, g.name, ()), a.value)))
            o = conj(o, pre)
        return Typed(e.cls, value, k, o, m)


def _merge(parts: Sequence[Typed]) -> Tuple[Predicate, Predicate, Predicate]:
    return (conj(*(t.knowledge for t in parts)), conj(*(t.obligation for t in parts)),
            conj(*(t.measure for t in parts)))


def type_expr(gamma: Mapping[str, str], e: Expr, table: FlatTable) -> Judgement:
    """Type ``e`` and state what is known and what must hold about its value ``result``."""
    t = Typer(table, gamma, free_vars(e)).expr(e)
    known = t.knowledge
    if not isinstance(t.value, Var):
        known = map_exprs(known, lambda x: Result() if x == t.value else x)
    head = conj(lift(TypeTest(Result(), t.cls)), eq(Result(), t.value))
    return Judgement(t.cls, conj(head, known), t.obligation)


# ────── method and body verification ──────

def _check_header(table: FlatTable, m: Method):
    for t in (m.return_type,) + m.param_types:
        if t not in table.bodies:
            raise TypingError(f"{m.name}: unknown class {t}")


def _typed_body(table: FlatTable, owner: str, m: Method, measures=None, current=None) -> Tuple[Typer, Typed]:
    _check_header(table, m)
    gamma = {THIS: owner, **dict(m.params)}
    typer = Typer(table, gamma, free_vars(m.body), measures, current)
    t = typer.expr(m.body)
    if not table.is_subtype(t.cls, m.return_type):
        raise TypingError(f"{owner}.{m.name} returns {t.cls}, declared {m.return_type}")
    return typer, t


def method_obligation(table: FlatTable, owner: str, m: Method) -> Obligation:
    """(Pre && knowledge) ==> (obligation && Post[result := body value]) for a concrete method."""
    typer, t = _typed_body(table, owner, m)
    post = substitute_all(resolve_old(m.spec.post), {RESULT: t.value})
    env = {**typer.gamma, **typer.fresh}
    return Obligation(f"{owner}.{m.name}", conj(resolve_old(m.spec.pre), t.knowledge), conj(t.obligation, post),
                      f"verify {owner}.{m.name}", env, table.records())


def verify_method(table: FlatTable, owner: str, m: Method, cfg: Optional[ProverConfig] = None) -> ProofResult:
    if m.is_abstract:
        return Valid()
    return check_implication(method_obligation(table, owner, m), cfg)


@dataclass(frozen=True)
class MethodCheck:
    owner: str
    method: str
    obligation: Optional[Obligation] = None
    result: Optional[ProofResult] = None
    error: Optional[str] = None

    @property
    def id(self) -> str:
        return self.obligation.id if self.obligation is not None else f"{self.owner}.{self.method}"

    @property
    def ok(self) -> bool:
        return self.error is None and isinstance(self.result, Valid)


@dataclass(frozen=True)
class BodyCheck:
    name: str
    methods: Tuple[MethodCheck, ...] = ()

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.methods)

    @property
    def failures(self) -> Tuple[str, ...]:
        return tuple(c.method for c in self.methods if not c.ok)


def _pending(table: FlatTable, owner: str, body: Body) -> List[MethodCheck]:
    out = []
    for m in body.methods:
        if m.is_abstract:
            continue
        try:
            out.append(MethodCheck(owner, m.name, method_obligation(table, owner, m)))
        except CbcError as exc:
            out.append(MethodCheck(owner, m.name, error=exc.detail))
    return out


def _discharge(checks: Sequence[MethodCheck], cfg: Optional[ProverConfig], workers: int) -> List[MethodCheck]:
    todo = [c.obligation for c in checks if c.error is None]
    results = iter(r for _, r in discharge_all(todo, cfg, workers))
    out = []
    for c in checks:
        if c.error is None:
            c = replace(c, result=next(results))
            logger.debug(f"{c.id}: {render_result(c.result)}")
        out.append(c)
    return out


def check_body(table: FlatTable, name: str, body: Body, cfg: Optional[ProverConfig] = None,
               workers: int = 1) -> BodyCheck:
    """Verify every concrete method of ``body`` as a member of ``name``; abstract ones are correct."""
    return BodyCheck(name, tuple(_discharge(_pending(table, name, body), cfg, workers)))


# ────── recursion measures ──────

def self_calls(e: Expr) -> Set[str]:
    found: Set[str] = set()

    def visit(x):
        if isinstance(x, Call) and x.receiver == Var(THIS):
            found.add(x.method)
        return x

    map_exprs(e, visit)
    return found


def recursive_groups(body: Body) -> Dict[str, FrozenSet[str]]:
    """For every concrete method on a call cycle through ``this``, the methods of its cycle."""
    edges = {m.name: self_calls(m.body) for m in body.methods if not m.is_abstract}

    def reach(start: str) -> Set[str]:
        seen: Set[str] = set()
        todo = list(edges.get(start, ()))
        while todo:
            n = todo.pop()
            if n in seen:
                continue
            seen.add(n)
            todo.extend(edges.get(n, ()))
        return seen

    reached = {n: reach(n) for n in edges}
    return {n: frozenset(k for k in reached[n] if n in reached.get(k, ()))
            for n in edges if n in reached[n]}


def measure_checks(table: FlatTable, cls: str) -> List[MethodCheck]:
    """Every call along a recursion cycle of ``cls`` must decrease the callee's measure."""
    body = table.body(cls)
    out = []
    for name, group in sorted(recursive_groups(body).items()):
        m = body.method(name)
        missing = sorted(n for n in group if body.method(n).measure is None)
        if missing:
            out.append(MethodCheck(cls, name, error=f"recursive method(s) {', '.join(missing)} need a @Measure"))
            continue
        measures = {n: body.method(n).measure for n in group}
        try:
            measure = Typer(table, {THIS: cls, **dict(m.params)}).expr(m.measure)
            if measure.cls != "Num" or measure.knowledge != TrueP():
                raise TypingError(f"measure of {name} must be a Num built from parameters, getters and lists")
            typer, t = _typed_body(table, cls, m, measures, measure.value)
        except CbcError as exc:
            out.append(MethodCheck(cls, name, error=exc.detail))
            continue
        ob = Obligation(f"{cls}.{name}.measure", conj(resolve_old(m.spec.pre), t.knowledge), t.measure,
                        f"measure {cls}.{name}", {**typer.gamma, **typer.fresh}, table.records())
        out.append(MethodCheck(cls, name, ob))
    return out


# ────── composition ──────

@dataclass(frozen=True)
class CompositionCheck:
    owner: str
    method: str
    kept: Optional[str]
    implications: Tuple[Tuple[str, ProofResult], ...] = ()

    @property
    def ok(self) -> bool:
        return self.kept is not None


def _same_signature(m1: Method, m2: Method):
    if m1.name != m2.name:
        raise SignatureMismatch(f"cannot compose {m1.name} with {m2.name}")
    if m1.param_types != m2.param_types or m1.return_type != m2.return_type:
        raise SignatureMismatch(f"{m1.name}: signatures differ")


def _renamed_spec(m: Method, names: Sequence[str]) -> Method:
    mapping = {old: Var(new) for old, new in zip(m.param_names, names) if old != new}
    if not mapping:
        return m
    spec = type(m.spec)(substitute_all(m.spec.pre, mapping), substitute_all(m.spec.post, mapping))
    return replace(m, spec=spec, params=tuple(zip(names, m.param_types)))


def _refines(new: Method, old: Method, cfg: Optional[ProverConfig], owner: str,
             records: Sequence[RecordShape]) -> List[Tuple[str, Obligation, ProofResult]]:
    """``new`` may stand for ``old``: Pre(old) ==> Pre(new) and Post(new) ==> Post(old)."""
    old = _renamed_spec(old, new.param_names)
    env = {**dict(new.params), RESULT: new.return_type}
    if owner:
        env[THIS] = owner
    pre_old, pre_new = resolve_old(old.spec.pre), resolve_old(new.spec.pre)
    obs = [
        Obligation(f"{owner}.{new.name}.pre", pre_old, pre_new, f"compose {owner}.{new.name}", env, records),
        Obligation(f"{owner}.{new.name}.post", resolve_old(new.spec.post),
                   resolve_old(old.spec.post), f"compose {owner}.{new.name}", env, records),
    ]
    return [(label, ob, check_implication(ob, cfg)) for label, ob in zip(("pre", "post"), obs)]


def _failure(m: Method, attempt: List[Tuple[str, Obligation, ProofResult]]) -> SpecIncompatible:
    for label, _, r in attempt:
        if not isinstance(r, Valid):
            cex = dict(r.counterexample) if isinstance(r, Invalid) else None
            return SpecIncompatible(f"{m.name}: {label} implication {render_result(r)}", cex)
    return SpecIncompatible(f"{m.name}: specifications are incompatible")


def compose_method(m1: Method, m2: Method, cfg: Optional[ProverConfig] = None, owner: str = "",
                   records: Sequence[RecordShape] = (), checks: Optional[List[CompositionCheck]] = None) -> Method:
    """The method standing for both ``m1`` and ``m2``.

    A concrete method is kept against an abstract one when it refines its
    specification; of two abstract methods the refining one is kept, the left
    on a tie. Two concrete methods conflict.
    """
    _same_signature(m1, m2)
    if not m1.is_abstract and not m2.is_abstract:
        raise ConflictError(f"{m1.name} is implemented twice")

    def record(kept, attempts):
        if checks is not None:
            pairs = tuple((f"{label}: {_show(ob)}", r) for a in attempts for label, ob, r in a)
            checks.append(CompositionCheck(owner, m1.name, kept, pairs))

    def ok(attempt) -> bool:
        return all(isinstance(r, Valid) for _, _, r in attempt)

    if not m1.is_abstract or not m2.is_abstract:
        concrete, abstract, side = (m1, m2, "left") if not m1.is_abstract else (m2, m1, "right")
        attempt = _refines(concrete, abstract, cfg, owner, records)
        if not ok(attempt):
            record(None, [attempt])
            raise _failure(m1, attempt)
        record(side, [attempt])
        return replace(concrete, measure=concrete.measure or abstract.measure)
    first = _refines(m1, m2, cfg, owner, records)
    if ok(first):
        record("left", [first])
        return replace(m1, measure=m1.measure or m2.measure)
    second = _refines(m2, m1, cfg, owner, records)
    if ok(second):
        record("right", [first, second])
        return replace(m2, measure=m2.measure or m1.measure)
    record(None, [first, second])
    raise _failure(m1, first)


def _show(ob: Obligation) -> str:
    return f"{show_predicate(ob.hypothesis)} ==> {show_predicate(ob.conclusion)}"


def compose_bodies(b1: Body, b2: Body, cfg: Optional[ProverConfig] = None, owner: str = "",
                   records: Sequence[RecordShape] = (), checks: Optional[List[CompositionCheck]] = None) -> Body:
    interfaces = tuple(dict.fromkeys(b1.interfaces + b2.interfaces))
    methods = []
    for m in b1.methods:
        other = b2.method(m.name)
        methods.append(m if other is None else compose_method(m, other, cfg, owner, records, checks))
    methods.extend(m for m in b2.methods if b1.method(m.name) is None)
    return Body(b1.is_interface and b2.is_interface, interfaces, tuple(methods))


def make_abstract(b: Body, name: str) -> Body:
    m = b.method(name)
    if m is None:
        raise TraitError(f"makeAbstract: no method {name}")
    return b.with_method(m.header())


def all_meth(name: str, bodies: Sequence[Body]) -> Tuple[Method, ...]:
    out: List[Method] = []
    for b in bodies:
        m = b.method(name)
        if m is not None and m.header() not in out:
            out.append(m.header())
    return tuple(out)


# ────── flattening ──────

@dataclass
class Flattening:
    table: FlatTable
    checks: List[CompositionCheck] = field(default_factory=list)
    methods: List[MethodCheck] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


class _Flattener:
    def __init__(self, ds: TraitTable, cfg: Optional[ProverConfig]):
        self.cfg = cfg
        self.decls = {d.name: d for d in prelude().merged(ds)}
        self.table = FlatTable()
        self.failed: Dict[str, str] = {}
        self.lits: Dict[str, List[Body]] = {}
        self.checks: List[CompositionCheck] = []

    def resolve(self, name: str) -> Body:
        if name in self.table.bodies:
            return self.table.bodies[name]
        if name in self.failed:
            raise TraitError(f"depends on {name}, which does not flatten")
        d = self.decls[name]
        try:
            self.lits[name] = []
            body = self.flatten(d.expr, name)
            if d.kind == CLASS:
                bad = [m.name for m in body.abstract_methods() if not m.is_getter()]
                if bad:
                    raise TraitError(f"class {name} has abstract non-getter method(s) {', '.join(bad)}")
        except CbcError as exc:
            self.failed[name] = exc.detail
            raise
        self.table.bodies[name] = body
        self.table.kinds[name] = d.kind
        return body

    def flatten(self, e: TraitExpr, owner: str) -> Body:
        if isinstance(e, Ref):
            return self.resolve(e.trait)
        if isinstance(e, Plus):
            lhs, rhs = self.flatten(e.lhs, owner), self.flatten(e.rhs, owner)
            return compose_bodies(lhs, rhs, self.cfg, owner, checks=self.checks)
        if isinstance(e, MakeAbstract):
            return make_abstract(self.flatten(e.inner, owner), e.method)
        body = self.imported(e.body, owner)
        self.lits[owner].append(body)
        return body

    def imported(self, body: Body, owner: str) -> Body:
        """The body with the abstract methods of its interfaces added, present ones checked against them."""
        interfaces = []
        for i in body.interfaces:
            ib = self.resolve(i)
            if not ib.is_interface:
                raise TraitError(f"{owner} implements {i}, which is not an interface")
            interfaces.append(ib)
        names = list(dict.fromkeys(m.name for ib in interfaces for m in ib.methods))
        for name in names:
            headers = all_meth(name, interfaces)
            header = headers[0]
            for h in headers[1:]:
                header = compose_method(header, h, self.cfg, owner, checks=self.checks)
            own = body.method(name)
            if own is None:
                body = body.with_method(header)
                continue
            _same_signature(own, header)
            attempt = _refines(own, header, self.cfg, owner, ())
            good = all(isinstance(r, Valid) for _, _, r in attempt)
            self.checks.append(CompositionCheck(owner, name, "left" if good else None,
                                                tuple((f"{label}: {_show(ob)}", r) for label, ob, r in attempt)))
            if not good:
                raise _failure(own, attempt)
        return body


def flatten_report(ds: TraitTable, cfg: Optional[ProverConfig] = None, workers: int = 1) -> Flattening:
    """Flatten every declaration, then verify every literal body against the finished table.

    Failures are collected as diagnostics rather than raised.
    """
    diagnostics = well_formed(ds)
    if diagnostics:
        return Flattening(FlatTable(), diagnostics=diagnostics)
    f = _Flattener(ds, cfg)
    origin = {d.name: d for d in ds}
    for name in list(prelude_names()) + [d.name for d in ds]:
        try:
            f.resolve(name)
        except CbcError as exc:
            if name in origin:
                cex = exc.counterexample if isinstance(exc, SpecIncompatible) else None
                diagnostics.append(Diagnostic(_where(origin[name]), exc.detail,
                                              tuple(sorted(cex.items())) if cex else None))
                logger.warning(f"{name}: {exc.detail}")
    pending: List[MethodCheck] = []
    for d in ds:
        if d.name in f.failed:
            continue
        for body in f.lits.get(d.name, []):
            pending.extend(_pending(f.table, d.name, body))
        if d.kind == CLASS:
            pending.extend(measure_checks(f.table, d.name))
    methods = _discharge(pending, cfg, workers)
    for c in methods:
        if c.ok:
            continue
        d = origin[c.owner]
        if c.error is not None:
            diagnostics.append(Diagnostic(_where(d, c.method), c.error, obligation=c.id))
        else:
            cex = c.result.counterexample if isinstance(c.result, Invalid) else None
            diagnostics.append(Diagnostic(_where(d, c.method), f"{c.id} is {render_result(c.result)}", cex, c.id))
    for d in ds:
        if d.name not in f.failed:
            logger.info(f"flattened {d.kind} {d.name}: {len(f.table.bodies[d.name].methods)} method(s)")
    return Flattening(f.table, f.checks, methods, diagnostics)


def flatten_table(ds: TraitTable, cfg: Optional[ProverConfig] = None, workers: int = 1) -> FlatTable:
    result = flatten_report(ds, cfg, workers)
    if not result.ok:
        raise FlattenError(f"{len(result.diagnostics)} declaration problem(s): {result.diagnostics[0]}",
                           result.diagnostics)
    return result.table
