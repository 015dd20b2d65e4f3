"""Weakest preconditions of concrete statements.

Loops contribute their side conditions as separate auxiliary obligations
instead of being folded into the formula.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from cbcforge.errors import UndeclaredVariable, UnknownMethod, WpError
from cbcforge.kernel import (
    INT, RESULT, Abstract, Assign, Atom, Binary, BlockRef, Contract, Forall, IntLit, LocalDecl, MethodCallStmt,
    Predicate, Repeat, Select, Seq, Skip, Statement, TypeDomain, TypeName, Var, conj, disj, eq, free_vars,
    assigned_names, fresh_name, implies, lift, negate, resolve_old, sort_of, statement_vars, substitute,
    substitute_all, substitute_old,
)


@dataclass(frozen=True)
class MethodSig:
    """What a caller may rely on: parameters, return type and contract."""
    name: str
    params: Tuple[Tuple[str, TypeName], ...]
    return_type: TypeName
    contract: Contract

    @property
    def param_names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.params)


class Aux(NamedTuple):
    label: str
    hypothesis: Predicate
    conclusion: Predicate
    env: Tuple[Tuple[str, TypeName], ...] = ()


@dataclass
class _Walk:
    methods: Mapping[str, MethodSig]
    env: Optional[Mapping[str, TypeName]]
    frames: Mapping[str, Sequence[Tuple[str, TypeName]]]
    aux: List[Tuple[tuple, str, Predicate, Predicate, tuple]] = field(default_factory=list)
    taken: set = field(default_factory=set)
    summarize_loops: bool = False


def call_wp(sig: MethodSig, args: Sequence, target: str, post: Predicate, taken) -> Predicate:
    """Pre'[p:=a] && forall r. (Post'[old(p):=a, p:=a, result:=r] ==> post[target:=r])."""
    # r ranges over the bounded domain of the return type: a callee whose results all fall
    # outside it makes the quantifier vacuous, so the call then establishes any post
    if len(args) != len(sig.params):
        raise WpError(f"{sig.name} takes {len(sig.params)} argument(s), got {len(args)}")
    actual = dict(zip(sig.param_names, args))
    pre = substitute_all(sig.contract.pre, actual)
    used = set(taken) | free_vars(post) | set(sig.param_names)
    for a in args:
        used |= free_vars(a)
    r = fresh_name(f"{target}'", used)
    callee_post = substitute_old(sig.contract.post, actual)
    callee_post = substitute_all(callee_post, {**actual, RESULT: Var(r)})
    after = substitute(post, target, Var(r))
    return conj(pre, Forall(r, TypeDomain(sort_of(sig.return_type)), implies(callee_post, after)))


def _havoc(frame: Sequence[Tuple[str, TypeName]], assumption: Predicate, post: Predicate, used) -> Predicate:
    """forall x'. assumption[x:=x'] ==> post[x:=x'] over the variables of ``frame``."""
    used = set(used) | free_vars(post) | free_vars(assumption)
    renaming: Dict[str, Var] = {}
    binders: List[Tuple[str, TypeName]] = []
    for name, type_name in frame:
        fresh = fresh_name(f"{name}'", used)
        used.add(fresh)
        renaming[name] = Var(fresh)
        binders.append((fresh, type_name))
    body = implies(substitute_all(assumption, renaming), substitute_all(post, renaming))
    for fresh, type_name in reversed(binders):
        body = Forall(fresh, TypeDomain(sort_of(type_name)), body)
    return body


def block_wp(ref: BlockRef, frame: Sequence[Tuple[str, TypeName]], post: Predicate, taken) -> Predicate:
    """A block as an opaque call: its precondition, then its postcondition for any final assignables."""
    return conj(ref.pre, _havoc(frame, resolve_old(ref.post), post, set(taken) | free_vars(ref.pre)))


def _wp(s: Statement, post: Predicate, w: _Walk, path: tuple) -> Predicate:
    if isinstance(s, Skip):
        return post
    if isinstance(s, Assign):
        if w.env is not None and s.target not in w.env:
            raise UndeclaredVariable(f"assignment to undeclared variable {s.target!r}")
        return substitute(post, s.target, s.value)
    if isinstance(s, LocalDecl):
        return substitute(post, s.name, s.init)
    if isinstance(s, Seq):
        mid = _wp(s.second, post, w, path + (1,))
        return _wp(s.first, mid, w, path + (0,))
    if isinstance(s, Select):
        coverage = disj(*(lift(g) for g, _ in s.branches))
        arms = [implies(lift(g), _wp(body, post, w, path + (k,))) for k, (g, body) in enumerate(s.branches)]
        return conj(coverage, *arms)
    if isinstance(s, Repeat):
        return _loop_as_spec(s, post, w) if w.summarize_loops else _loop(s, post, w, path)
    if isinstance(s, MethodCallStmt):
        if s.method not in w.methods:
            raise UnknownMethod(f"unknown method {s.method!r}")
        if w.env is not None and s.target not in w.env:
            raise UndeclaredVariable(f"call result assigned to undeclared variable {s.target!r}")
        return call_wp(w.methods[s.method], s.args, s.target, post, w.taken)
    if isinstance(s, BlockRef):
        if s.name not in w.frames:
            raise WpError(f"block {s.name} has no frame")
        return block_wp(s, w.frames[s.name], post, w.taken)
    if isinstance(s, Abstract):
        raise WpError(f"statement {s.id} is still abstract")
    raise WpError(f"no weakest precondition for {type(s).__name__}")


def _loop(s: Repeat, post: Predicate, w: _Walk, path: tuple) -> Predicate:
    inv, guard = s.invariant, lift(s.guard)
    body_inv = _wp(s.body, inv, w, path + (0,))
    w.aux.append((path, "exit", conj(inv, negate(guard)), post, ()))
    w.aux.append((path, "preserve", conj(inv, guard), body_inv, ()))
    w.aux.append((path, "variant") + _decrease(s, w, free_vars(post)))
    return inv


def _decrease(s: Repeat, w: _Walk, used) -> Tuple[Predicate, Predicate, tuple]:
    used = w.taken | set(used) | free_vars(s.invariant) | free_vars(s.variant)
    v0 = fresh_name("V0", used)
    decreasing = conj(Atom(Binary("<=", IntLit(0), s.variant)), Atom(Binary("<", s.variant, Var(v0))))
    # inner loops only contribute their invariant and exit condition
    summary = _Walk(w.methods, w.env, w.frames, [], w.taken | {v0}, summarize_loops=True)
    body_dec = _wp(s.body, decreasing, summary, ())
    return conj(s.invariant, lift(s.guard), eq(Var(v0), s.variant)), body_dec, ((v0, INT),)


def variant_condition(s: Repeat, methods: Optional[Mapping[str, MethodSig]] = None,
                      env: Optional[Mapping[str, TypeName]] = None,
                      frames: Optional[Mapping[str, Sequence[Tuple[str, TypeName]]]] = None) -> Aux:
    """I && G && V0 == V ==> wp(body, 0 <= V < V0) for one loop, V0 fresh."""
    w = _Walk(dict(methods or {}), env, dict(frames or {}))
    w.taken = set(statement_vars(s)) | set(env or ())
    hyp, concl, extra = _decrease(s, w, ())
    return Aux("variant", resolve_old(hyp), resolve_old(concl), extra)


def _loop_as_spec(s: Repeat, post: Predicate, w: _Walk) -> Predicate:
    frame = []
    for name in sorted(assigned_names(s.body)):
        if w.env is None or name not in w.env:
            raise WpError(f"no type for loop variable {name!r}")
        frame.append((name, w.env[name]))
    exit_state = conj(s.invariant, negate(lift(s.guard)))
    return conj(s.invariant, _havoc(frame, exit_state, post, w.taken))


def wp_concrete(s: Statement, post: Predicate, methods: Optional[Mapping[str, MethodSig]] = None,
                env: Optional[Mapping[str, TypeName]] = None,
                frames: Optional[Mapping[str, Sequence[Tuple[str, TypeName]]]] = None
                ) -> Tuple[Predicate, List[Aux]]:
    """wp(s, post) with old() resolved at the pre-state, plus loop side conditions.

    Aux labels are ``loop<k>.exit``, ``loop<k>.preserve`` and ``loop<k>.variant``,
    loops numbered from 1 in textual order.
    """
    w = _Walk(dict(methods or {}), env, dict(frames or {}))
    w.taken = set(statement_vars(s)) | set(env or ())
    out = resolve_old(_wp(s, post, w, ()))
    loops: Dict[tuple, int] = {}
    for p in sorted({a[0] for a in w.aux}):
        loops[p] = len(loops) + 1
    order = {"exit": 0, "preserve": 1, "variant": 2}
    aux = []
    for p, kind, hyp, concl, extra in sorted(w.aux, key=lambda a: (a[0], order[a[1]])):
        aux.append(Aux(f"loop{loops[p]}.{kind}", resolve_old(hyp), resolve_old(concl), extra))
    return out, aux


def wp(s: Statement, post: Predicate, methods: Optional[Mapping[str, MethodSig]] = None) -> Predicate:
    """wp of a loop-free statement; loops make this an error, use wp_concrete."""
    out, aux = wp_concrete(s, post, methods)
    if aux:
        raise WpError("statement contains loops; use wp_concrete for their side conditions")
    return out
