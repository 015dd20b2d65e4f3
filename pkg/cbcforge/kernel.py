"""Expressions, predicates, statements and contracts, with the syntactic
operations every refinement rule is built on.

All values are frozen dataclasses; every operation here is a pure function.
"""
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Set, Tuple, Union

from cbcforge.errors import KernelError

TypeName = str
INT, BOOL, SEQ = "int", "bool", "seq"
SORTS = (INT, BOOL, SEQ)

RESULT = "result"

# Trait-level type names and the sort their values live in.
TYPE_SORTS = {"Num": INT, "Bool": BOOL, "List": SEQ, "Cons": SEQ, "Nil": SEQ, INT: INT, BOOL: BOOL, SEQ: SEQ}


def sort_of(type_name: TypeName) -> TypeName:
    return TYPE_SORTS.get(type_name, type_name)


ARITH_OPS = ("+", "-", "*", "div")
COMPARE_OPS = ("<", "<=", ">", ">=")
EQUALITY_OPS = ("==", "!=")
LOGIC_OPS = ("&&", "||")
BINARY_OPS = ARITH_OPS + COMPARE_OPS + EQUALITY_OPS + LOGIC_OPS

# op -> takes an argument
SEQ_OPS = {"size": False, "get": True, "contains": True, "element": False, "tail": False}


def _tuple(items) -> tuple:
    return tuple(items) if not isinstance(items, tuple) else items


# ────── expressions ──────

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Old(Expr):
    inner: Var

    def __post_init__(self):
        if not isinstance(self.inner, Var):
            raise KernelError("old() applies to a variable only")


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    lhs: Expr
    rhs: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise KernelError(f"unknown binary operator {self.op!r}")


@dataclass(frozen=True)
class Not(Expr):
    inner: Expr


@dataclass(frozen=True)
class SeqLit(Expr):
    elems: Tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "elems", _tuple(self.elems))


@dataclass(frozen=True)
class SeqOp(Expr):
    op: str
    receiver: Expr
    index: Optional[Expr] = None

    def __post_init__(self):
        if self.op not in SEQ_OPS:
            raise KernelError(f"unknown sequence operation {self.op!r}")
        if SEQ_OPS[self.op] != (self.index is not None):
            raise KernelError(f"{self.op}() takes {'one argument' if SEQ_OPS[self.op] else 'no arguments'}")


@dataclass(frozen=True)
class Call(Expr):
    receiver: Expr
    method: str
    args: Tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", _tuple(self.args))


@dataclass(frozen=True)
class New(Expr):
    cls: str
    args: Tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", _tuple(self.args))


@dataclass(frozen=True)
class Result(Expr):
    pass


@dataclass(frozen=True)
class IfExpr(Expr):
    cond: Expr
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class TypeTest(Expr):
    inner: Expr
    cls: str


# ────── predicates ──────

class Predicate:
    __slots__ = ()


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise KernelError(f"empty integer range [{self.lo},{self.hi}]")


@dataclass(frozen=True)
class SeqElems:
    seq: Expr


@dataclass(frozen=True)
class SeqIndices:
    seq: Expr


@dataclass(frozen=True)
class TypeDomain:
    """Every value of a sort; bounded by the prover configuration."""
    type_name: TypeName


BoundedDomain = Union[IntRange, SeqElems, SeqIndices, TypeDomain]


@dataclass(frozen=True)
class Atom(Predicate):
    expr: Expr


@dataclass(frozen=True)
class AndP(Predicate):
    items: Tuple[Predicate, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", _tuple(self.items))


@dataclass(frozen=True)
class OrP(Predicate):
    items: Tuple[Predicate, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", _tuple(self.items))


@dataclass(frozen=True)
class NotP(Predicate):
    inner: Predicate


@dataclass(frozen=True)
class Implies(Predicate):
    lhs: Predicate
    rhs: Predicate


@dataclass(frozen=True)
class Forall(Predicate):
    var: str
    domain: BoundedDomain
    body: Predicate


@dataclass(frozen=True)
class Exists(Predicate):
    var: str
    domain: BoundedDomain
    body: Predicate


@dataclass(frozen=True)
class TrueP(Predicate):
    pass


@dataclass(frozen=True)
class FalseP(Predicate):
    pass


Quantifier = (Forall, Exists)


# ────── statements ──────

class Statement:
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Statement):
    pass


@dataclass(frozen=True)
class Assign(Statement):
    target: str
    value: Expr


@dataclass(frozen=True)
class Seq(Statement):
    first: Statement
    second: Statement


@dataclass(frozen=True)
class Select(Statement):
    branches: Tuple[Tuple[Expr, Statement], ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(tuple(b) for b in self.branches))
        if not self.branches:
            raise KernelError("selection needs at least one guard")


@dataclass(frozen=True)
class Repeat(Statement):
    invariant: Predicate
    variant: Expr
    guard: Expr
    body: Statement


@dataclass(frozen=True)
class MethodCallStmt(Statement):
    method: str
    args: Tuple[Expr, ...]
    target: str

    def __post_init__(self):
        object.__setattr__(self, "args", _tuple(self.args))


@dataclass(frozen=True)
class Abstract(Statement):
    id: str


@dataclass(frozen=True)
class BlockRef(Statement):
    name: str
    pre: Predicate
    post: Predicate


@dataclass(frozen=True)
class LocalDecl(Statement):
    name: str
    type: TypeName
    init: Expr


@dataclass(frozen=True)
class Contract:
    pre: Predicate
    post: Predicate

    def __post_init__(self):
        if mentions_old(self.pre):
            raise KernelError("precondition may not use old()")
        if RESULT in free_vars(self.pre):
            raise KernelError("precondition may not mention result")


# ────── constructors ──────

def conj(*preds: Predicate) -> Predicate:
    items = []
    for p in preds:
        if isinstance(p, TrueP):
            continue
        if isinstance(p, AndP):
            items.extend(p.items)
        else:
            items.append(p)
    if not items:
        return TrueP()
    if any(isinstance(p, FalseP) for p in items):
        return FalseP()
    return items[0] if len(items) == 1 else AndP(tuple(items))


def disj(*preds: Predicate) -> Predicate:
    items = []
    for p in preds:
        if isinstance(p, FalseP):
            continue
        if isinstance(p, OrP):
            items.extend(p.items)
        else:
            items.append(p)
    if not items:
        return FalseP()
    if any(isinstance(p, TrueP) for p in items):
        return TrueP()
    return items[0] if len(items) == 1 else OrP(tuple(items))


def implies(lhs: Predicate, rhs: Predicate) -> Predicate:
    if isinstance(lhs, TrueP) or isinstance(rhs, TrueP):
        return rhs
    return Implies(lhs, rhs)


def negate(p: Predicate) -> Predicate:
    if isinstance(p, TrueP):
        return FalseP()
    if isinstance(p, FalseP):
        return TrueP()
    if isinstance(p, NotP):
        return p.inner
    return NotP(p)


def lift(e: Expr) -> Predicate:
    """Boolean structure of an expression as predicate structure."""
    if isinstance(e, BoolLit):
        return TrueP() if e.value else FalseP()
    if isinstance(e, Binary) and e.op == "&&":
        return conj(lift(e.lhs), lift(e.rhs))
    if isinstance(e, Binary) and e.op == "||":
        return disj(lift(e.lhs), lift(e.rhs))
    if isinstance(e, Not):
        return negate(lift(e.inner))
    return Atom(e)


def eq(lhs: Expr, rhs: Expr) -> Predicate:
    return Atom(Binary("==", lhs, rhs))


# ────── free variables ──────

def _expr_vars(e: Expr, out: Set[str]):
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, Result):
        out.add(RESULT)
    elif isinstance(e, Old):
        out.add(e.inner.name)
    elif isinstance(e, Binary):
        _expr_vars(e.lhs, out)
        _expr_vars(e.rhs, out)
    elif isinstance(e, (Not, TypeTest)):
        _expr_vars(e.inner, out)
    elif isinstance(e, SeqLit):
        for x in e.elems:
            _expr_vars(x, out)
    elif isinstance(e, SeqOp):
        _expr_vars(e.receiver, out)
        if e.index is not None:
            _expr_vars(e.index, out)
    elif isinstance(e, Call):
        _expr_vars(e.receiver, out)
        for x in e.args:
            _expr_vars(x, out)
    elif isinstance(e, New):
        for x in e.args:
            _expr_vars(x, out)
    elif isinstance(e, IfExpr):
        _expr_vars(e.cond, out)
        _expr_vars(e.then, out)
        _expr_vars(e.orelse, out)


def _domain_vars(d: BoundedDomain, out: Set[str]):
    if isinstance(d, (SeqElems, SeqIndices)):
        _expr_vars(d.seq, out)


def _pred_vars(p: Predicate, out: Set[str]):
    if isinstance(p, Atom):
        _expr_vars(p.expr, out)
    elif isinstance(p, (AndP, OrP)):
        for q in p.items:
            _pred_vars(q, out)
    elif isinstance(p, NotP):
        _pred_vars(p.inner, out)
    elif isinstance(p, Implies):
        _pred_vars(p.lhs, out)
        _pred_vars(p.rhs, out)
    elif isinstance(p, Quantifier):
        _domain_vars(p.domain, out)
        inner: Set[str] = set()
        _pred_vars(p.body, inner)
        inner.discard(p.var)
        out |= inner


def free_vars(node: Union[Expr, Predicate]) -> FrozenSet[str]:
    out: Set[str] = set()
    if isinstance(node, Expr):
        _expr_vars(node, out)
    else:
        _pred_vars(node, out)
    return frozenset(out)


def mentions_old(node: Union[Expr, Predicate]) -> bool:
    return bool(old_names(node))


def old_names(node: Union[Expr, Predicate]) -> FrozenSet[str]:
    """Variables that occur under old()."""
    found: Set[str] = set()

    def visit(e):
        if isinstance(e, Old):
            found.add(e.inner.name)
        return e

    map_exprs(node, visit)
    return frozenset(found)


def fresh_name(base: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    if base not in taken:
        return base
    k = 1
    while f"{base}'{k}" in taken:
        k += 1
    return f"{base}'{k}"


# ────── generic rewriting ──────

def _map_expr(e: Expr, fn) -> Expr:
    if isinstance(e, Binary):
        e = Binary(e.op, _map_expr(e.lhs, fn), _map_expr(e.rhs, fn))
    elif isinstance(e, Not):
        e = Not(_map_expr(e.inner, fn))
    elif isinstance(e, TypeTest):
        e = TypeTest(_map_expr(e.inner, fn), e.cls)
    elif isinstance(e, SeqLit):
        e = SeqLit(tuple(_map_expr(x, fn) for x in e.elems))
    elif isinstance(e, SeqOp):
        e = SeqOp(e.op, _map_expr(e.receiver, fn), None if e.index is None else _map_expr(e.index, fn))
    elif isinstance(e, Call):
        e = Call(_map_expr(e.receiver, fn), e.method, tuple(_map_expr(x, fn) for x in e.args))
    elif isinstance(e, New):
        e = New(e.cls, tuple(_map_expr(x, fn) for x in e.args))
    elif isinstance(e, IfExpr):
        e = IfExpr(_map_expr(e.cond, fn), _map_expr(e.then, fn), _map_expr(e.orelse, fn))
    return fn(e)


def map_exprs(node, fn):
    """Bottom-up rewrite of every expression node; binders are not renamed."""
    if isinstance(node, Expr):
        return _map_expr(node, fn)
    if isinstance(node, Atom):
        return Atom(_map_expr(node.expr, fn))
    if isinstance(node, AndP):
        return AndP(tuple(map_exprs(q, fn) for q in node.items))
    if isinstance(node, OrP):
        return OrP(tuple(map_exprs(q, fn) for q in node.items))
    if isinstance(node, NotP):
        return NotP(map_exprs(node.inner, fn))
    if isinstance(node, Implies):
        return Implies(map_exprs(node.lhs, fn), map_exprs(node.rhs, fn))
    if isinstance(node, Quantifier):
        return type(node)(node.var, _map_domain(node.domain, lambda x: _map_expr(x, fn)), map_exprs(node.body, fn))
    return node


def _map_domain(d: BoundedDomain, fn) -> BoundedDomain:
    if isinstance(d, SeqElems):
        return SeqElems(fn(d.seq))
    if isinstance(d, SeqIndices):
        return SeqIndices(fn(d.seq))
    return d


# ────── substitution ──────

def _subst_expr(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    def visit(x):
        if isinstance(x, Var) and x.name in mapping:
            return mapping[x.name]
        if isinstance(x, Result) and RESULT in mapping:
            return mapping[RESULT]
        return x

    return _map_expr(e, visit)


def _subst_pred(p: Predicate, mapping: Mapping[str, Expr]) -> Predicate:
    if not mapping:
        return p
    if isinstance(p, Atom):
        return Atom(_subst_expr(p.expr, mapping))
    if isinstance(p, AndP):
        return AndP(tuple(_subst_pred(q, mapping) for q in p.items))
    if isinstance(p, OrP):
        return OrP(tuple(_subst_pred(q, mapping) for q in p.items))
    if isinstance(p, NotP):
        return NotP(_subst_pred(p.inner, mapping))
    if isinstance(p, Implies):
        return Implies(_subst_pred(p.lhs, mapping), _subst_pred(p.rhs, mapping))
    if isinstance(p, Quantifier):
        domain = _map_domain(p.domain, lambda x: _subst_expr(x, mapping))
        inner = {k: v for k, v in mapping.items() if k != p.var}
        body_vars = free_vars(p.body)
        inner = {k: v for k, v in inner.items() if k in body_vars}
        if not inner:
            return type(p)(p.var, domain, p.body)
        incoming: Set[str] = set()
        for v in inner.values():
            incoming |= free_vars(v)
        var, body = p.var, p.body
        if var in incoming:
            var = fresh_name(p.var, incoming | body_vars | set(inner))
            body = _subst_pred(body, {p.var: Var(var)})
        return type(p)(var, domain, _subst_pred(body, inner))
    return p


def substitute_all(node, mapping: Mapping[str, Expr]):
    """Simultaneous capture-avoiding substitution of free variables.

    The key ``result`` replaces the distinguished post-state value. ``old(x)``
    occurrences are left alone; see :func:`substitute_old`.
    """
    if isinstance(node, Expr):
        return _subst_expr(node, mapping)
    return _subst_pred(node, dict(mapping))


def substitute(p, var: str, e: Expr):
    return substitute_all(p, {var: e})


def substitute_old(node, mapping: Mapping[str, Expr]):
    def visit(x):
        if isinstance(x, Old) and x.inner.name in mapping:
            return mapping[x.inner.name]
        return x

    return map_exprs(node, visit)


def resolve_old(node, names: Optional[Iterable[str]] = None):
    """old(x) becomes x, for every x or only for ``names``."""
    keep = None if names is None else set(names)

    def visit(x):
        if isinstance(x, Old) and (keep is None or x.inner.name in keep):
            return x.inner
        return x

    return map_exprs(node, visit)


# ────── statements ──────

def statement_vars(s: Statement) -> Set[str]:
    """Every identifier a statement reads, writes or declares."""
    out: Set[str] = set()
    if isinstance(s, Assign):
        out.add(s.target)
        _expr_vars(s.value, out)
    elif isinstance(s, LocalDecl):
        out.add(s.name)
        _expr_vars(s.init, out)
    elif isinstance(s, Seq):
        out |= statement_vars(s.first) | statement_vars(s.second)
    elif isinstance(s, Select):
        for g, b in s.branches:
            _expr_vars(g, out)
            out |= statement_vars(b)
    elif isinstance(s, Repeat):
        _pred_vars(s.invariant, out)
        _expr_vars(s.variant, out)
        _expr_vars(s.guard, out)
        out |= statement_vars(s.body)
    elif isinstance(s, MethodCallStmt):
        out.add(s.target)
        for a in s.args:
            _expr_vars(a, out)
    elif isinstance(s, BlockRef):
        _pred_vars(s.pre, out)
        _pred_vars(s.post, out)
    return out


def declared_names(s: Statement) -> Dict[str, TypeName]:
    out: Dict[str, TypeName] = {}
    if isinstance(s, LocalDecl):
        out[s.name] = s.type
    elif isinstance(s, Seq):
        out.update(declared_names(s.first))
        out.update(declared_names(s.second))
    elif isinstance(s, Select):
        for _, b in s.branches:
            out.update(declared_names(b))
    elif isinstance(s, Repeat):
        out.update(declared_names(s.body))
    return out


def assigned_names(s: Statement) -> Set[str]:
    if isinstance(s, Assign):
        return {s.target}
    if isinstance(s, MethodCallStmt):
        return {s.target}
    if isinstance(s, Seq):
        return assigned_names(s.first) | assigned_names(s.second)
    if isinstance(s, Select):
        out: Set[str] = set()
        for _, b in s.branches:
            out |= assigned_names(b)
        return out
    if isinstance(s, Repeat):
        return assigned_names(s.body)
    return set()


def is_concrete(s: Statement) -> bool:
    if isinstance(s, (Abstract, BlockRef)):
        return False
    if isinstance(s, Seq):
        return is_concrete(s.first) and is_concrete(s.second)
    if isinstance(s, Select):
        return all(is_concrete(b) for _, b in s.branches)
    if isinstance(s, Repeat):
        return is_concrete(s.body)
    return True


def rename_statement(s: Statement, mapping: Mapping[str, str]) -> Statement:
    return alpha_rename(s, (), mapping)[0]


def alpha_rename(s: Statement, taken: Iterable[str], _seed: Optional[Mapping[str, str]] = None
                 ) -> Tuple[Statement, Dict[str, str]]:
    """Rename every local declaration colliding with ``taken``.

    A declaration scopes over the remainder of its enclosing sequence. The
    returned map records the first renaming of each original name.
    """
    used = set(taken) | statement_vars(s)
    renaming: Dict[str, str] = {}
    blocked = set(taken)

    def as_vars(env):
        return {k: Var(v) for k, v in env.items()}

    def go(st: Statement, env: Dict[str, str]) -> Tuple[Statement, Dict[str, str]]:
        sub = as_vars(env)
        if isinstance(st, LocalDecl):
            init = substitute_all(st.init, sub)
            name = st.name
            if name in blocked:
                name = fresh_name(st.name, used)
                used.add(name)
                renaming.setdefault(st.name, name)
            blocked.add(name)
            env = dict(env)
            if name != st.name:
                env[st.name] = name
            else:
                env.pop(st.name, None)
            return LocalDecl(name, st.type, init), env
        if isinstance(st, Assign):
            return Assign(env.get(st.target, st.target), substitute_all(st.value, sub)), env
        if isinstance(st, Seq):
            first, env1 = go(st.first, env)
            second, env2 = go(st.second, env1)
            return Seq(first, second), env2
        if isinstance(st, Select):
            return Select(tuple((substitute_all(g, sub), go(b, env)[0]) for g, b in st.branches)), env
        if isinstance(st, Repeat):
            return Repeat(substitute_all(st.invariant, sub), substitute_all(st.variant, sub),
                          substitute_all(st.guard, sub), go(st.body, env)[0]), env
        if isinstance(st, MethodCallStmt):
            return MethodCallStmt(st.method, tuple(substitute_all(a, sub) for a in st.args),
                                  env.get(st.target, st.target)), env
        if isinstance(st, BlockRef):
            return BlockRef(st.name, substitute_all(st.pre, sub), substitute_all(st.post, sub)), env
        return st, env

    out, _ = go(s, dict(_seed or {}))
    return out, renaming


# ────── static typing of CbC expressions ──────

def type_of(e: Expr, env: Mapping[str, TypeName]) -> TypeName:
    if isinstance(e, IntLit):
        return INT
    if isinstance(e, BoolLit):
        return BOOL
    if isinstance(e, (Var, Result)):
        name = RESULT if isinstance(e, Result) else e.name
        if name not in env:
            raise KernelError(f"undeclared variable {name!r}")
        return env[name]
    if isinstance(e, Old):
        return type_of(e.inner, env)
    if isinstance(e, Not):
        _expect(e.inner, BOOL, env)
        return BOOL
    if isinstance(e, TypeTest):
        type_of(e.inner, env)
        return BOOL
    if isinstance(e, Binary):
        if e.op in ARITH_OPS:
            _expect(e.lhs, INT, env)
            _expect(e.rhs, INT, env)
            return INT
        if e.op in COMPARE_OPS:
            _expect(e.lhs, INT, env)
            _expect(e.rhs, INT, env)
            return BOOL
        if e.op in LOGIC_OPS:
            _expect(e.lhs, BOOL, env)
            _expect(e.rhs, BOOL, env)
            return BOOL
        lhs = type_of(e.lhs, env)
        _expect(e.rhs, lhs, env)
        return BOOL
    if isinstance(e, SeqLit):
        for x in e.elems:
            _expect(x, INT, env)
        return SEQ
    if isinstance(e, SeqOp):
        _expect(e.receiver, SEQ, env)
        if e.index is not None:
            _expect(e.index, INT, env)
        return {"size": INT, "get": INT, "contains": BOOL, "element": INT, "tail": SEQ}[e.op]
    if isinstance(e, IfExpr):
        _expect(e.cond, BOOL, env)
        then = type_of(e.then, env)
        _expect(e.orelse, then, env)
        return then
    raise KernelError(f"{type(e).__name__} is not allowed in a statement expression")


def _expect(e: Expr, want: TypeName, env: Mapping[str, TypeName]):
    got = type_of(e, env)
    if got != want:
        raise KernelError(f"expected {want}, found {got}")


def check_predicate(p: Predicate, env: Mapping[str, TypeName]):
    """Raise KernelError unless every atom of ``p`` is boolean under ``env``."""
    if isinstance(p, Atom):
        _expect(p.expr, BOOL, env)
    elif isinstance(p, (AndP, OrP)):
        for q in p.items:
            check_predicate(q, env)
    elif isinstance(p, NotP):
        check_predicate(p.inner, env)
    elif isinstance(p, Implies):
        check_predicate(p.lhs, env)
        check_predicate(p.rhs, env)
    elif isinstance(p, Quantifier):
        d = p.domain
        if isinstance(d, (SeqElems, SeqIndices)):
            _expect(d.seq, SEQ, env)
            bound = INT
        elif isinstance(d, TypeDomain):
            bound = d.type_name
        else:
            bound = INT
        check_predicate(p.body, {**env, p.var: bound})
