"""Bounded-domain prover.

An obligation ``hypothesis ==> conclusion`` is checked by enumerating every
assignment of its free variables inside the configured bounds: integers in
``[-int_bound, int_bound]``, booleans, and integer sequences in shortlex order
up to ``max_seq_len`` with elements in ``[-seq_elem_bound, seq_elem_bound]``.
Variables fixed by a top-level ``v == e`` conjunct of the hypothesis are
computed instead of enumerated; the counterexample reported is still the
first one in plain enumeration order, variables sorted by name. A state
whose hypothesis is undefined does not satisfy it.
"""
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from cbcforge.errors import CbcError
from cbcforge.kernel import (
    BOOL, INT, RESULT, SEQ, AndP, Assign, Atom, Binary, BoolLit, Call, Exists, Expr, FalseP, Forall, IfExpr,
    Implies, IntLit, IntRange, LocalDecl, MethodCallStmt, New, Not, NotP, Old, OrP, Predicate, Repeat, Result, Select,
    Seq, SeqElems, SeqIndices, SeqLit, SeqOp, Skip, Statement, TrueP, TypeDomain, TypeTest, Var, free_vars, lift,
    sort_of,
)
from cbcforge.logging_module import logger
from cbcforge.schemas import ProverConfig

SEQ_CLASSES = {"List": None, "Cons": True, "Nil": False}


# ────── values ──────

@dataclass(frozen=True)
class ObjVal:
    cls: str
    fields: Tuple[Tuple[str, Any], ...] = ()

    def get(self, name: str):
        for k, v in self.fields:
            if k == name:
                return v
        raise EvalError(f"{self.cls} has no getter {name}()")


@dataclass(frozen=True)
class RecordShape:
    """Getter layout of a class, and the names it is a subtype of.

    Abstract shapes (interfaces) only contribute values when nothing implements them.
    """
    cls: str
    fields: Tuple[Tuple[str, str], ...] = ()
    supers: Tuple[str, ...] = ()
    abstract: bool = False


Value = Union[int, bool, tuple, ObjVal]


class EvalError(CbcError):
    """Ill-typed evaluation: the obligation cannot be decided."""


class Partial(CbcError):
    """A partial operation applied outside its domain."""


# ────── obligations and verdicts ──────

@dataclass(frozen=True)
class Obligation:
    id: str
    hypothesis: Predicate
    conclusion: Predicate
    provenance: str = ""
    env: Tuple[Tuple[str, str], ...] = ()
    records: Tuple[RecordShape, ...] = ()

    def __post_init__(self):
        env = self.env.items() if isinstance(self.env, Mapping) else self.env
        object.__setattr__(self, "env", tuple(sorted(env)))
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def types(self) -> Dict[str, str]:
        return dict(self.env)

    @property
    def shapes(self) -> Dict[str, RecordShape]:
        return {r.cls: r for r in self.records}

    def free_vars(self) -> List[str]:
        return sorted(free_vars(self.hypothesis) | free_vars(self.conclusion))


@dataclass(frozen=True)
class Valid:
    verdict = "valid"


@dataclass(frozen=True)
class Invalid:
    counterexample: Tuple[Tuple[str, Any], ...] = ()
    verdict = "invalid"

    def __post_init__(self):
        object.__setattr__(self, "counterexample", tuple(self.counterexample))

    @property
    def model(self) -> Dict[str, Any]:
        return dict(self.counterexample)


@dataclass(frozen=True)
class Unknown:
    reason: str
    verdict = "unknown"


ProofResult = Union[Valid, Invalid, Unknown]


# ────── domains ──────


def seq_values(cfg: ProverConfig) -> Iterator[tuple]:
    elems = range(-cfg.seq_elem_bound, cfg.seq_elem_bound + 1)
    for n in range(cfg.max_seq_len + 1):
        yield from itertools.product(elems, repeat=n)


def domain_values(type_name: str, cfg: ProverConfig, shapes: Optional[Mapping[str, RecordShape]] = None,
                  _open: FrozenSet[str] = frozenset()) -> List[Value]:
    sort = sort_of(type_name)
    if sort == INT:
        return list(range(-cfg.int_bound, cfg.int_bound + 1))
    if sort == BOOL:
        return [False, True]
    if sort == SEQ:
        values = list(seq_values(cfg))
        if SEQ_CLASSES.get(type_name) is True:
            return [v for v in values if v]
        if SEQ_CLASSES.get(type_name) is False:
            return [()]
        return values
    shapes = shapes or {}
    own = shapes.get(type_name)
    kinds = [s for s in shapes.values() if type_name in s.supers and not s.abstract]
    if own is not None and (not own.abstract or not kinds):
        kinds.insert(0, own)
    if not kinds:
        return [ObjVal(type_name)]
    out: List[Value] = []
    for shape in kinds:
        # an object whose fields lead back to its own class has no finite value
        if shape.cls in _open:
            continue
        names = [n for n, _ in shape.fields]
        pools = [domain_values(t, cfg, shapes, _open | {shape.cls}) for _, t in shape.fields]
        out.extend(ObjVal(shape.cls, tuple(zip(names, combo))) for combo in itertools.product(*pools))
    return out


def in_domain(v: Value, type_name: str, cfg: ProverConfig) -> bool:
    sort = sort_of(type_name)
    if sort == INT:
        return type(v) is int and -cfg.int_bound <= v <= cfg.int_bound
    if sort == BOOL:
        return type(v) is bool
    if sort == SEQ:
        if not isinstance(v, tuple) or len(v) > cfg.max_seq_len:
            return False
        if SEQ_CLASSES.get(type_name) is True and not v:
            return False
        if SEQ_CLASSES.get(type_name) is False and v:
            return False
        return all(type(x) is int and abs(x) <= cfg.seq_elem_bound for x in v)
    return isinstance(v, ObjVal)


# ────── evaluation ──────

class Evaluator:
    def __init__(self, cfg: ProverConfig, shapes: Optional[Mapping[str, RecordShape]] = None):
        self.cfg = cfg
        self.shapes = dict(shapes or {})

    def expr(self, e: Expr, store: Mapping[str, Value]) -> Value:
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, Var):
            if e.name not in store:
                raise EvalError(f"unbound variable {e.name}")
            return store[e.name]
        if isinstance(e, Result):
            if RESULT not in store:
                raise EvalError("unbound result")
            return store[RESULT]
        if isinstance(e, Old):
            return self.expr(e.inner, store)
        if isinstance(e, Not):
            return not self.truth(self.expr(e.inner, store))
        if isinstance(e, Binary):
            return self._binary(e, store)
        if isinstance(e, SeqLit):
            return tuple(self.integer(self.expr(x, store)) for x in e.elems)
        if isinstance(e, SeqOp):
            arg = None if e.index is None else self.expr(e.index, store)
            return seq_op(e.op, self.expr(e.receiver, store), arg)
        if isinstance(e, Call):
            return self._call(e, store)
        if isinstance(e, New):
            return self.new(e.cls, [self.expr(a, store) for a in e.args])
        if isinstance(e, IfExpr):
            branch = e.then if self.truth(self.expr(e.cond, store)) else e.orelse
            return self.expr(branch, store)
        if isinstance(e, TypeTest):
            return self.has_type(self.expr(e.inner, store), e.cls)
        raise EvalError(f"cannot evaluate {type(e).__name__}")

    def truth(self, v) -> bool:
        if type(v) is not bool:
            raise EvalError(f"expected a boolean, found {render_value(v)}")
        return v

    def integer(self, v) -> int:
        if type(v) is not int:
            raise EvalError(f"expected an integer, found {render_value(v)}")
        return v

    def _binary(self, e: Binary, store) -> Value:
        if e.op == "&&":
            return self.truth(self.expr(e.lhs, store)) and self.truth(self.expr(e.rhs, store))
        if e.op == "||":
            return self.truth(self.expr(e.lhs, store)) or self.truth(self.expr(e.rhs, store))
        lhs, rhs = self.expr(e.lhs, store), self.expr(e.rhs, store)
        if e.op == "==":
            return lhs == rhs and type(lhs) is type(rhs)
        if e.op == "!=":
            return not (lhs == rhs and type(lhs) is type(rhs))
        a, b = self.integer(lhs), self.integer(rhs)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "div":
            if b == 0:
                raise Partial("division by zero")
            return a // b
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[e.op]

    def _call(self, e: Call, store) -> Value:
        receiver = self.expr(e.receiver, store)
        args = [self.expr(a, store) for a in e.args]
        if isinstance(receiver, tuple) and e.method in ("size", "get", "contains", "element", "tail"):
            return seq_op(e.method, receiver, args[0] if args else None)
        if isinstance(receiver, ObjVal) and not args:
            return receiver.get(e.method)
        raise EvalError(f"cannot call {e.method}() on {render_value(receiver)}")

    def new(self, cls: str, args: Sequence[Value]) -> Value:
        if cls == "Nil" and not args:
            return ()
        if cls == "Cons" and len(args) == 2 and isinstance(args[1], tuple):
            return (self.integer(args[0]),) + args[1]
        shape = self.shapes.get(cls)
        if shape is not None:
            if len(shape.fields) != len(args):
                raise EvalError(f"new {cls}() takes {len(shape.fields)} argument(s)")
            return ObjVal(cls, tuple(zip((n for n, _ in shape.fields), args)))
        return ObjVal(cls, tuple((str(k), v) for k, v in enumerate(args)))

    def has_type(self, v: Value, cls: str) -> bool:
        if cls in ("Num", INT):
            return type(v) is int
        if cls in ("Bool", BOOL):
            return type(v) is bool
        if cls in ("List", SEQ):
            return isinstance(v, tuple)
        if cls == "Cons":
            return isinstance(v, tuple) and bool(v)
        if cls == "Nil":
            return v == ()
        if not isinstance(v, ObjVal):
            return False
        if v.cls == cls:
            return True
        shape = self.shapes.get(v.cls)
        return shape is not None and cls in shape.supers

    # predicates
    def holds(self, p: Predicate, store: Mapping[str, Value]) -> bool:
        if isinstance(p, TrueP):
            return True
        if isinstance(p, FalseP):
            return False
        if isinstance(p, Atom):
            return self.truth(self.expr(p.expr, store))
        if isinstance(p, AndP):
            return all(self.holds(q, store) for q in p.items)
        if isinstance(p, OrP):
            return any(self.holds(q, store) for q in p.items)
        if isinstance(p, NotP):
            return not self.holds(p.inner, store)
        if isinstance(p, Implies):
            return not self.holds(p.lhs, store) or self.holds(p.rhs, store)
        if isinstance(p, (Forall, Exists)):
            values = self.domain(p.domain, store)
            if isinstance(p, Forall):
                return all(self.holds(p.body, {**store, p.var: v}) for v in values)
            return any(self.holds(p.body, {**store, p.var: v}) for v in values)
        raise EvalError(f"cannot evaluate {type(p).__name__}")

    def domain(self, d, store) -> Iterable[Value]:
        if isinstance(d, IntRange):
            return range(d.lo, d.hi + 1)
        if isinstance(d, TypeDomain):
            return domain_values(d.type_name, self.cfg, self.shapes)
        seq = self.expr(d.seq, store)
        if not isinstance(seq, tuple):
            raise EvalError(f"quantifier domain is not a sequence: {render_value(seq)}")
        if isinstance(d, SeqElems):
            return seq
        if isinstance(d, SeqIndices):
            return range(len(seq))
        raise EvalError(f"unknown domain {d!r}")


def seq_op(op: str, receiver: Value, arg: Optional[Value]) -> Value:
    if not isinstance(receiver, tuple):
        raise EvalError(f"{op}() on a non-sequence {render_value(receiver)}")
    if op == "size":
        return len(receiver)
    if op == "contains":
        return arg in receiver and type(arg) is int
    if op == "get":
        if type(arg) is not int:
            raise EvalError("get() index must be an integer")
        if not 0 <= arg < len(receiver):
            raise Partial(f"index {arg} out of range for {render_value(receiver)}")
        return receiver[arg]
    if not receiver:
        raise Partial(f"{op}() of an empty sequence")
    return receiver[0] if op == "element" else receiver[1:]


# ────── implication checking ──────

def _pin_candidates(hypothesis: Predicate) -> List[Tuple[str, Expr]]:
    items = hypothesis.items if isinstance(hypothesis, AndP) else (hypothesis,)
    out = []
    for p in items:
        if not (isinstance(p, Atom) and isinstance(p.expr, Binary) and p.expr.op == "=="):
            continue
        lhs, rhs = p.expr.lhs, p.expr.rhs
        for v, e in ((lhs, rhs), (rhs, lhs)):
            name = RESULT if isinstance(v, Result) else v.name if isinstance(v, Var) else None
            if name is not None and name not in free_vars(e):
                out.append((name, e))
                break
    return out


def pinned_order(hypothesis: Predicate, names: Sequence[str]) -> List[Tuple[str, Expr]]:
    """Pins whose dependencies form no cycle, ordered dependencies first."""
    deps: Dict[str, frozenset] = {}
    chosen: Dict[str, Expr] = {}

    def reaches(start: Iterable[str], target: str) -> bool:
        todo, seen = list(start), set()
        while todo:
            u = todo.pop()
            if u == target:
                return True
            if u in seen:
                continue
            seen.add(u)
            todo.extend(deps.get(u, ()))
        return False

    for name, e in _pin_candidates(hypothesis):
        if name in chosen or name not in names:
            continue
        fv = free_vars(e)
        if reaches(fv, name):
            continue
        chosen[name], deps[name] = e, fv

    ordered: List[Tuple[str, Expr]] = []
    placed: set = set()

    def place(name: str):
        if name in placed:
            return
        placed.add(name)
        for d in sorted(deps[name]):
            if d in chosen:
                place(d)
        ordered.append((name, chosen[name]))

    for name in chosen:
        place(name)
    return ordered


def _stores(enumerated: Sequence[str], pins: Sequence[Tuple[str, Expr]], types: Mapping[str, str],
            ev: Evaluator) -> Iterator[Dict[str, Value]]:
    pools = [domain_values(types[v], ev.cfg, ev.shapes) for v in enumerated]

    def complete(store: Dict[str, Value], k: int) -> Iterator[Dict[str, Value]]:
        if k == len(pins):
            yield store
            return
        name, e = pins[k]
        try:
            value = ev.expr(e, store)
        except (Partial, EvalError):
            for value in domain_values(types[name], ev.cfg, ev.shapes):
                yield from complete({**store, name: value}, k + 1)
            return
        if in_domain(value, types[name], ev.cfg):
            yield from complete({**store, name: value}, k + 1)

    for combo in itertools.product(*pools):
        yield from complete(dict(zip(enumerated, combo)), 0)


def _ranker(names: Sequence[str], types: Mapping[str, str], ev: Evaluator) -> Callable[[Mapping[str, Value]], tuple]:
    """Position of a store in plain enumeration order."""
    index = [{v: k for k, v in enumerate(domain_values(types[n], ev.cfg, ev.shapes))} for n in names]
    return lambda store: tuple(ix.get(store[n], len(ix)) for n, ix in zip(names, index))


def _verdict_at(ob: Obligation, store: Mapping[str, Value], names: Sequence[str],
                ev: Evaluator) -> Optional[ProofResult]:
    """None when the state satisfies the obligation; an undefined hypothesis does not hold."""
    try:
        if not ev.holds(ob.hypothesis, store):
            return None
    except Partial:
        return None
    except EvalError as exc:
        return Unknown(f"hypothesis undefined at {render_store(store, names)}: {exc.detail}")
    try:
        if ev.holds(ob.conclusion, store):
            return None
    except (Partial, EvalError) as exc:
        return Unknown(f"conclusion undefined at {render_store(store, names)}: {exc.detail}")
    return Invalid(tuple((n, store[n]) for n in names))


def check_implication(ob: Obligation, cfg: Optional[ProverConfig] = None) -> ProofResult:
    cfg = cfg or ProverConfig()
    names = ob.free_vars()
    types = ob.types
    missing = [n for n in names if n not in types]
    if missing:
        return Unknown(f"no type for {', '.join(missing)}")
    ev = Evaluator(cfg, ob.shapes)
    pins = pinned_order(ob.hypothesis, names)
    pinned = {n for n, _ in pins}
    enumerated = [n for n in names if n not in pinned]
    rank = _ranker(names, types, ev) if pins else None
    first: Optional[Tuple[tuple, ProofResult]] = None
    checked = 0
    for store in _stores(enumerated, pins, types, ev):
        checked += 1
        if first is not None and rank(store) >= first[0]:
            continue
        found = _verdict_at(ob, store, names, ev)
        if found is None:
            continue
        if rank is None:
            return found
        # pinned states arrive out of order; keep scanning for an earlier one
        first = (rank(store), found)
    if first is not None:
        return first[1]
    logger.debug(f"{ob.id}: valid over {checked} states")
    return Valid()


def is_valid(hypothesis: Predicate, conclusion: Predicate, env: Mapping[str, str],
             cfg: Optional[ProverConfig] = None) -> ProofResult:
    return check_implication(Obligation("adhoc", hypothesis, conclusion, "", env), cfg)


def _discharge_one(job: Tuple[Obligation, ProverConfig]) -> ProofResult:
    ob, cfg = job
    return check_implication(ob, cfg)


def discharge_all(obligations: Sequence[Obligation], cfg: Optional[ProverConfig] = None,
                  workers: int = 1) -> List[Tuple[Obligation, ProofResult]]:
    """Results in input order; with several workers obligations are checked in a process pool."""
    cfg = cfg or ProverConfig()
    jobs = [(ob, cfg) for ob in obligations]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_discharge_one, jobs))
    else:
        results = [_discharge_one(j) for j in jobs]
    return list(zip(obligations, results))


# ────── statement execution ──────

class Aborted(CbcError):
    """No guard of a selection holds."""


@dataclass
class Machine:
    """Executes concrete statements over a store; the oracle for renaming and wp tests."""
    cfg: ProverConfig = field(default_factory=ProverConfig)
    methods: Mapping[str, Callable[..., Value]] = field(default_factory=dict)
    fuel: int = 10_000

    def run(self, s: Statement, store: Mapping[str, Value]) -> Dict[str, Value]:
        ev = Evaluator(self.cfg)
        out = dict(store)
        self._exec(s, out, ev)
        return out

    def _tick(self):
        self.fuel -= 1
        if self.fuel < 0:
            raise EvalError("statement ran out of fuel")

    def _exec(self, s: Statement, store: Dict[str, Value], ev: Evaluator):
        self._tick()
        if isinstance(s, Skip):
            return
        if isinstance(s, Assign):
            store[s.target] = ev.expr(s.value, store)
        elif isinstance(s, LocalDecl):
            store[s.name] = ev.expr(s.init, store)
        elif isinstance(s, Seq):
            self._exec(s.first, store, ev)
            self._exec(s.second, store, ev)
        elif isinstance(s, Select):
            for g, body in s.branches:
                if ev.truth(ev.expr(g, store)):
                    self._exec(body, store, ev)
                    return
            raise Aborted("no guard holds")
        elif isinstance(s, Repeat):
            while ev.truth(ev.expr(s.guard, store)):
                self._tick()
                self._exec(s.body, store, ev)
        elif isinstance(s, MethodCallStmt):
            if s.method not in self.methods:
                raise EvalError(f"no implementation for {s.method}")
            store[s.target] = self.methods[s.method](*[ev.expr(a, store) for a in s.args])
        else:
            raise EvalError(f"cannot execute {type(s).__name__}")


def run_statement(s: Statement, store: Mapping[str, Value], cfg: Optional[ProverConfig] = None,
                  methods: Optional[Mapping[str, Callable[..., Value]]] = None, fuel: int = 10_000
                  ) -> Dict[str, Value]:
    return Machine(cfg or ProverConfig(), dict(methods or {}), fuel).run(s, store)


# ────── rendering ──────

def render_value(v: Value) -> str:
    if type(v) is bool:
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "[" + ", ".join(render_value(x) for x in v) + "]"
    if isinstance(v, ObjVal):
        return f"new {v.cls}(" + ", ".join(render_value(x) for _, x in v.fields) + ")"
    return str(v)


def json_value(v: Value) -> Any:
    if isinstance(v, tuple):
        return [json_value(x) for x in v]
    if isinstance(v, ObjVal):
        return {"class": v.cls, "fields": {k: json_value(x) for k, x in v.fields}}
    return v


def render_store(store: Mapping[str, Value], order: Optional[Sequence[str]] = None) -> str:
    names = order if order is not None else sorted(store)
    return "{" + ", ".join(f"{n}={render_value(store[n])}" for n in names if n in store) + "}"


def render_result(r: ProofResult) -> str:
    if isinstance(r, Invalid):
        return "invalid " + render_store(r.model, [n for n, _ in r.counterexample])
    if isinstance(r, Unknown):
        return f"unknown ({r.reason})"
    return "valid"


def as_predicate(x: Union[Expr, Predicate]) -> Predicate:
    return x if isinstance(x, Predicate) else lift(x)
