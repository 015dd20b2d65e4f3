"""Refinement trees and the rule applications of classic CbC.

A method unit starts as one abstract statement ``A0`` carrying the method's
contract. Every ``apply_*`` call refines one open node, returns a new unit and
records the side conditions of the rule as obligations; nothing is proved
until :func:`check_tree` discharges them.
"""
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from cbcforge.errors import CbcError, KernelError, RefinementError
from cbcforge.kernel import (
    BOOL, INT, RESULT, Abstract, Assign, BlockRef, Contract, Expr, LocalDecl, MethodCallStmt, Predicate, Repeat,
    Select, Seq, Skip, Statement, TypeName, Var, check_predicate, conj, declared_names, disj, lift, negate,
    old_names, resolve_old, substitute, substitute_all, substitute_old, type_of,
)
from cbcforge.logging_module import logger
from cbcforge.prover import Obligation, ProofResult, Valid, discharge_all
from cbcforge.schemas import ProverConfig
from cbcforge.syntax import show_predicate, show_statement
from cbcforge.wp import MethodSig, variant_condition, wp_concrete

if TYPE_CHECKING:
    from cbcforge.block import BlockDecl

OPEN, PROVEN, FAILED = "open", "proven", "failed"

RULES = ("skip", "assignment", "declare", "composition", "selection", "repetition",
         "weaken", "strengthen", "call", "block")


@dataclass(frozen=True)
class RefinementNode:
    id: str
    pre: Predicate
    post: Predicate
    stmt: Statement
    rule: Optional[str] = None
    args: Tuple[Tuple[str, Any], ...] = ()
    children: Tuple["RefinementNode", ...] = ()
    obligations: Tuple[Obligation, ...] = ()
    status: str = OPEN

    @property
    def is_open(self) -> bool:
        return self.rule is None

    def arg(self, name: str, default=None):
        return dict(self.args).get(name, default)

    def walk(self) -> Iterator["RefinementNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass(frozen=True)
class MethodUnit:
    name: str
    params: Tuple[Tuple[str, TypeName], ...]
    return_type: TypeName
    contract: Contract
    root: RefinementNode
    state: Tuple[Tuple[str, TypeName], ...] = ()
    next_index: int = 1
    blocks: Tuple["BlockDecl", ...] = ()

    def signature(self) -> MethodSig:
        return MethodSig(self.name, self.params, self.return_type, self.contract)

    def node(self, node_id: str) -> RefinementNode:
        for n in self.root.walk():
            if n.id == node_id:
                return n
        raise RefinementError(f"{self.name}: no node {node_id}")

    def block(self, name: str) -> Optional["BlockDecl"]:
        for b in self.blocks:
            if b.name == name:
                return b
        return None

    def base_env(self) -> Dict[str, TypeName]:
        env = dict(self.params)
        env.update(self.state)
        env[RESULT] = self.return_type
        return env

    def types(self) -> Dict[str, TypeName]:
        """Every name a method-level obligation can mention."""
        env = self.base_env()
        env.update(declared_names(extract_program(self, inline_blocks=False)))
        return env


def new_unit(name: str, params: Sequence[Tuple[str, TypeName]], return_type: TypeName,
             contract: Contract, state: Sequence[Tuple[str, TypeName]] = ()) -> MethodUnit:
    """A unit whose root is the single abstract statement ``A0``.

    ``state`` names ambient variables the method may assign besides ``result``
    and its locals; parameters are read-only.
    """
    params = tuple(tuple(p) for p in params)
    state = tuple(tuple(s) for s in state)
    names = [n for n, _ in params + state]
    if len(set(names)) != len(names):
        raise RefinementError(f"{name}: duplicate parameter or state names")
    stale = [n for n, _ in state if n in old_names(contract.post)]
    if stale:
        raise RefinementError(f"{name}: old() on modified state {', '.join(stale)}")
    root = RefinementNode("A0", contract.pre, contract.post, Abstract("A0"))
    return MethodUnit(name, params, return_type, contract, root, state)


# ────── tree plumbing ──────

def _replace_node(node: RefinementNode, node_id: str, new: RefinementNode) -> RefinementNode:
    if node.id == node_id:
        return new
    if not node.children:
        return node
    return replace(node, children=tuple(_replace_node(c, node_id, new) for c in node.children))


def _open_node(unit: MethodUnit, node_id: str) -> RefinementNode:
    node = unit.node(node_id)
    if not node.is_open:
        raise RefinementError(f"{unit.name}.{node_id} is already refined by {node.rule}")
    return node


def _fresh_children(unit: MethodUnit, triples: Sequence[Tuple[Predicate, Predicate]]
                    ) -> Tuple[MethodUnit, List[RefinementNode]]:
    out = []
    k = unit.next_index
    for pre, post in triples:
        node_id = f"A{k}"
        out.append(RefinementNode(node_id, pre, post, Abstract(node_id)))
        k += 1
    return replace(unit, next_index=k), out


def _ob(unit: MethodUnit, node: RefinementNode, kind: str, hyp: Predicate, concl: Predicate,
        rule: str) -> Obligation:
    return Obligation(f"{unit.name}.{node.id}.{kind}", hyp, concl, f"{rule} at {unit.name}.{node.id}")


def _refined(unit: MethodUnit, node: RefinementNode, rule: str, stmt: Statement,
             args: Mapping[str, Any], obligations=(), children=()) -> MethodUnit:
    new = replace(node, stmt=stmt, rule=rule, args=tuple(args.items()), obligations=tuple(obligations),
                  children=tuple(children))
    logger.debug(f"{unit.name}.{node.id}: {rule}")
    return replace(unit, root=_replace_node(unit.root, node.id, new))


def _exported(s: Statement) -> Dict[str, TypeName]:
    """Declarations visible to the statements after ``s``."""
    if isinstance(s, LocalDecl):
        return {s.name: s.type}
    if isinstance(s, Seq):
        return {**_exported(s.first), **_exported(s.second)}
    return {}


def _scopes(unit: MethodUnit) -> Dict[str, Dict[str, TypeName]]:
    out: Dict[str, Dict[str, TypeName]] = {}

    def visit(node: RefinementNode, env: Dict[str, TypeName]):
        out[node.id] = env
        if node.rule == "composition":
            first, second = node.children
            visit(first, env)
            visit(second, {**env, **_exported(_program(unit, first, False))})
            return
        for c in node.children:
            visit(c, env)

    visit(unit.root, unit.base_env())
    return out


def scope_at(unit: MethodUnit, node_id: str) -> Dict[str, TypeName]:
    """Parameters, ``result`` and the locals declared before ``node_id``."""
    scopes = _scopes(unit)
    if node_id not in scopes:
        raise RefinementError(f"{unit.name}: no node {node_id}")
    return scopes[node_id]


def _typed(unit: MethodUnit, node_id: str, e: Expr, want: TypeName, what: str):
    try:
        got = type_of(e, scope_at(unit, node_id))
    except KernelError as exc:
        raise RefinementError(f"{unit.name}.{node_id}: {what}: {exc.detail}") from None
    if got != want:
        raise RefinementError(f"{unit.name}.{node_id}: {what} must be {want}, found {got}")


def _writable(unit: MethodUnit, node_id: str, target: str):
    env = scope_at(unit, node_id)
    if target not in env:
        raise RefinementError(f"{unit.name}.{node_id}: assignment to undeclared variable {target!r}")
    if target in dict(unit.params):
        raise RefinementError(f"{unit.name}.{node_id}: parameter {target!r} is read-only")
    return env[target]


# ────── rules ──────

def apply_skip(unit: MethodUnit, node_id: str) -> MethodUnit:
    node = _open_node(unit, node_id)
    ob = _ob(unit, node, "skip", node.pre, node.post, "skip")
    return _refined(unit, node, "skip", Skip(), {}, [ob])


def apply_assignment(unit: MethodUnit, node_id: str, target: str, value: Expr) -> MethodUnit:
    node = _open_node(unit, node_id)
    _typed(unit, node_id, value, _writable(unit, node_id, target), f"value assigned to {target}")
    ob = _ob(unit, node, "assign", node.pre, substitute(node.post, target, value), "assignment")
    return _refined(unit, node, "assignment", Assign(target, value), {"target": target, "value": value}, [ob])


def apply_declare(unit: MethodUnit, node_id: str, type_name: TypeName, name: str, init: Expr) -> MethodUnit:
    """``T name = init``: the name is in scope for the rest of the enclosing composition."""
    node = _open_node(unit, node_id)
    if name in scope_at(unit, node_id):
        raise RefinementError(f"{unit.name}.{node_id}: {name!r} is already declared")
    known = unit.types()
    if name in known and known[name] != type_name:
        raise RefinementError(f"{unit.name}.{node_id}: {name!r} is declared elsewhere as {known[name]}")
    _typed(unit, node_id, init, type_name, f"initializer of {name}")
    ob = _ob(unit, node, "declare", node.pre, substitute(node.post, name, init), "declare")
    return _refined(unit, node, "declare", LocalDecl(name, type_name, init),
                    {"name": name, "type": type_name, "init": init}, [ob])


def apply_composition(unit: MethodUnit, node_id: str, mid: Predicate) -> MethodUnit:
    node = _open_node(unit, node_id)
    unit, (first, second) = _fresh_children(unit, [(node.pre, mid), (mid, node.post)])
    stmt = Seq(Abstract(first.id), Abstract(second.id))
    return _refined(unit, node, "composition", stmt, {"mid": mid}, [], [first, second])


def apply_selection(unit: MethodUnit, node_id: str, guards: Sequence[Expr]) -> MethodUnit:
    node = _open_node(unit, node_id)
    if not guards:
        raise RefinementError(f"{unit.name}.{node_id}: selection needs at least one guard")
    for g in guards:
        _typed(unit, node_id, g, BOOL, "guard")
    unit, children = _fresh_children(unit, [(conj(node.pre, lift(g)), node.post) for g in guards])
    ob = _ob(unit, node, "cover", node.pre, disj(*(lift(g) for g in guards)), "selection")
    stmt = Select(tuple((g, Abstract(c.id)) for g, c in zip(guards, children)))
    return _refined(unit, node, "selection", stmt, {"guards": tuple(guards)}, [ob], children)


def apply_repetition(unit: MethodUnit, node_id: str, invariant: Predicate, variant: Expr,
                     guard: Expr) -> MethodUnit:
    """Entry and exit are recorded now; the decrease of the variant once the body has no holes."""
    node = _open_node(unit, node_id)
    _typed(unit, node_id, variant, INT, "variant")
    _typed(unit, node_id, guard, BOOL, "loop guard")
    unit, (body,) = _fresh_children(unit, [(conj(invariant, lift(guard)), invariant)])
    obs = [_ob(unit, node, "entry", node.pre, invariant, "repetition"),
           _ob(unit, node, "exit", conj(invariant, negate(lift(guard))), node.post, "repetition")]
    stmt = Repeat(invariant, variant, guard, Abstract(body.id))
    args = {"invariant": invariant, "variant": variant, "guard": guard}
    return _refined(unit, node, "repetition", stmt, args, obs, [body])


def apply_weaken_pre(unit: MethodUnit, node_id: str, pre: Predicate) -> MethodUnit:
    node = _open_node(unit, node_id)
    unit, (child,) = _fresh_children(unit, [(pre, node.post)])
    ob = _ob(unit, node, "weaken", node.pre, pre, "weaken precondition")
    return _refined(unit, node, "weaken", Abstract(child.id), {"pre": pre}, [ob], [child])


def apply_strengthen_post(unit: MethodUnit, node_id: str, post: Predicate) -> MethodUnit:
    node = _open_node(unit, node_id)
    unit, (child,) = _fresh_children(unit, [(node.pre, post)])
    ob = _ob(unit, node, "strengthen", post, node.post, "strengthen postcondition")
    return _refined(unit, node, "strengthen", Abstract(child.id), {"post": post}, [ob], [child])


def apply_method_call(unit: MethodUnit, node_id: str, callee: MethodSig, args: Sequence[Expr],
                      target: str) -> MethodUnit:
    """``target = m(args)``: pre ==> Pre'[p:=a] and Post'[old(p):=a, p:=a, result:=target] ==> post."""
    node = _open_node(unit, node_id)
    args = tuple(args)
    if len(args) != len(callee.params):
        raise RefinementError(f"{unit.name}.{node_id}: {callee.name} takes {len(callee.params)} "
                              f"argument(s), got {len(args)}")
    for a, (p, t) in zip(args, callee.params):
        _typed(unit, node_id, a, t, f"argument {p} of {callee.name}")
    want = _writable(unit, node_id, target)
    if want != callee.return_type:
        raise RefinementError(f"{unit.name}.{node_id}: {callee.name} returns {callee.return_type}, "
                              f"{target} is {want}")
    actual = dict(zip(callee.param_names, args))
    pre = substitute_all(callee.contract.pre, actual)
    post = substitute_all(substitute_old(callee.contract.post, actual), {**actual, RESULT: Var(target)})
    obs = [_ob(unit, node, "call.pre", node.pre, pre, f"call {callee.name}"),
           _ob(unit, node, "call.post", post, node.post, f"call {callee.name}")]
    stmt = MethodCallStmt(callee.name, args, target)
    return _refined(unit, node, "call", stmt, {"method": callee.name, "args": args, "target": target}, obs)


def apply_block_ref(unit: MethodUnit, node_id: str, ref: BlockRef) -> MethodUnit:
    """The tree half of block introduction; see :func:`cbcforge.block.introduce_block`."""
    node = _open_node(unit, node_id)
    obs = [_ob(unit, node, "block.pre", node.pre, ref.pre, f"block {ref.name}"),
           _ob(unit, node, "block.post", resolve_old(ref.post), node.post, f"block {ref.name}")]
    return _refined(unit, node, "block", ref, {"name": ref.name}, obs)


APPLY = {
    "skip": lambda unit, node, a: apply_skip(unit, node),
    "assignment": lambda unit, node, a: apply_assignment(unit, node, a["target"], a["value"]),
    "declare": lambda unit, node, a: apply_declare(unit, node, a["type"], a["name"], a["init"]),
    "composition": lambda unit, node, a: apply_composition(unit, node, a["mid"]),
    "selection": lambda unit, node, a: apply_selection(unit, node, a["guards"]),
    "repetition": lambda unit, node, a: apply_repetition(unit, node, a["invariant"], a["variant"], a["guard"]),
    "weaken": lambda unit, node, a: apply_weaken_pre(unit, node, a["pre"]),
    "strengthen": lambda unit, node, a: apply_strengthen_post(unit, node, a["post"]),
}


# ────── programs ──────

def has_holes(s: Statement) -> bool:
    if isinstance(s, Abstract):
        return True
    if isinstance(s, Seq):
        return has_holes(s.first) or has_holes(s.second)
    if isinstance(s, Select):
        return any(has_holes(b) for _, b in s.branches)
    if isinstance(s, Repeat):
        return has_holes(s.body)
    return False


def _program(unit: MethodUnit, node: RefinementNode, inline_blocks: bool) -> Statement:
    kids = {c.id: c for c in node.children}

    def fill(s: Statement) -> Statement:
        if isinstance(s, Abstract):
            return _program(unit, kids[s.id], inline_blocks) if s.id in kids else s
        if isinstance(s, Seq):
            return Seq(fill(s.first), fill(s.second))
        if isinstance(s, Select):
            return Select(tuple((g, fill(b)) for g, b in s.branches))
        if isinstance(s, Repeat):
            return Repeat(s.invariant, s.variant, s.guard, fill(s.body))
        if isinstance(s, BlockRef) and inline_blocks:
            return inline_block(unit, s)
        return s

    return fill(node.stmt)


def inline_block(unit: MethodUnit, ref: BlockRef) -> Statement:
    """The renamed instantiation of a block with its nested blocks inlined, or ``ref`` if none."""
    decl = unit.block(ref.name)
    if decl is None or decl.body is None:
        return ref

    def fill(s: Statement) -> Statement:
        if isinstance(s, Seq):
            return Seq(fill(s.first), fill(s.second))
        if isinstance(s, Select):
            return Select(tuple((g, fill(b)) for g, b in s.branches))
        if isinstance(s, Repeat):
            return Repeat(s.invariant, s.variant, s.guard, fill(s.body))
        if isinstance(s, BlockRef):
            return inline_block(unit, s)
        return s

    return fill(decl.body)


def extract_program(unit: MethodUnit, inline_blocks: bool = True) -> Statement:
    """The refined program; unrefined nodes stay as ``Abstract`` holes."""
    return _program(unit, unit.root, inline_blocks)


def render_program(unit: MethodUnit) -> str:
    params = ", ".join(f"{t} {n}" for n, t in unit.params)
    lines = [f"{unit.return_type} {unit.name}({params})",
             f"requires {show_predicate(unit.contract.pre)};",
             f"ensures {show_predicate(unit.contract.post)};",
             "{",
             show_statement(extract_program(unit), 1),
             "}"]
    return "\n".join(lines)


# ────── checking ──────

@dataclass(frozen=True)
class CheckEntry:
    id: str
    provenance: str
    obligation: Optional[Obligation] = None
    result: Optional[ProofResult] = None


@dataclass(frozen=True)
class TreeCheck:
    unit: MethodUnit
    entries: Tuple[CheckEntry, ...] = ()

    @property
    def status(self) -> str:
        return self.unit.root.status


def _variant(unit: MethodUnit, node: RefinementNode, methods, env, frames) -> Optional[Obligation]:
    body = _program(unit, node.children[0], False)
    if has_holes(body):
        return None
    loop = Repeat(node.arg("invariant"), node.arg("variant"), node.arg("guard"), body)
    try:
        aux = variant_condition(loop, methods, env, frames)
    except CbcError as exc:
        raise RefinementError(f"{unit.name}.{node.id}: {exc.detail}") from None
    return Obligation(f"{unit.name}.{node.id}.variant", aux.hypothesis, aux.conclusion,
                      f"repetition at {unit.name}.{node.id}", {**env, **dict(aux.env)})


def collect(unit: MethodUnit, methods: Optional[Mapping[str, MethodSig]] = None
            ) -> Tuple[List[CheckEntry], Dict[str, List[str]]]:
    """Every obligation of the tree and its blocks with its typing, plus each owner's entry ids."""
    methods = dict(methods or {})
    env = unit.types()
    frames = {b.name: b.assignable for b in unit.blocks}
    entries: List[CheckEntry] = []
    owned: Dict[str, List[str]] = {}
    for node in unit.root.walk():
        mine = owned.setdefault(node.id, [])
        for ob in node.obligations:
            ob = replace(ob, env={**env, **ob.types})
            entries.append(CheckEntry(ob.id, ob.provenance, ob))
            mine.append(ob.id)
        if node.is_open:
            entries.append(CheckEntry(f"{unit.name}.{node.id}.abstract", f"unrefined {unit.name}.{node.id}"))
            mine.append(entries[-1].id)
        elif node.rule == "repetition":
            ob = _variant(unit, node, methods, env, frames)
            if ob is None:
                entries.append(CheckEntry(f"{unit.name}.{node.id}.variant",
                                          f"repetition at {unit.name}.{node.id}, body not yet concrete"))
            else:
                entries.append(CheckEntry(ob.id, ob.provenance, ob))
            mine.append(entries[-1].id)
    for b in unit.blocks:
        mine = owned.setdefault(b.name, [])
        if b.body is None:
            entries.append(CheckEntry(f"{unit.name}.{b.name}.inst", f"block {b.name} not instantiated"))
            mine.append(entries[-1].id)
        for ob in b.obligations:
            entries.append(CheckEntry(ob.id, ob.provenance, ob))
            mine.append(ob.id)
    return entries, owned


def _status(ids: Sequence[str], results: Mapping[str, Optional[ProofResult]], below: Sequence[str]) -> str:
    mine = [results[i] for i in ids]
    if any(r is not None and not isinstance(r, Valid) for r in mine) or FAILED in below:
        return FAILED
    if any(r is None for r in mine) or OPEN in below:
        return OPEN
    return PROVEN


def check_tree(unit: MethodUnit, cfg: Optional[ProverConfig] = None,
               methods: Optional[Mapping[str, MethodSig]] = None, workers: int = 1) -> TreeCheck:
    """Discharge every obligation of the unit and recompute statuses bottom-up."""
    entries, owned = collect(unit, methods)
    pending = [e.obligation for e in entries if e.obligation is not None]
    proved = {ob.id: r for ob, r in discharge_all(pending, cfg, workers)}
    results = {e.id: proved.get(e.id) for e in entries}
    entries = [replace(e, result=results[e.id]) for e in entries]

    block_status: Dict[str, str] = {}

    def block_state(name: str) -> str:
        if name not in block_status:
            decl = unit.block(name)
            nested = [block_state(n) for n in decl.nested]
            block_status[name] = _status(owned.get(name, []), results, nested)
        return block_status[name]

    def restatus(node: RefinementNode) -> RefinementNode:
        children = tuple(restatus(c) for c in node.children)
        below = [c.status for c in children]
        if node.rule == "block":
            below.append(block_state(node.arg("name")))
        return replace(node, children=children, status=_status(owned.get(node.id, []), results, below))

    root = restatus(unit.root)
    blocks = tuple(replace(b, status=block_state(b.name)) for b in unit.blocks)
    checked = replace(unit, root=root, blocks=blocks)
    logger.info(f"{unit.name}: {root.status}, {len(pending)} obligation(s) discharged")
    return TreeCheck(checked, tuple(entries))


def post_hoc(unit: MethodUnit, cfg: Optional[ProverConfig] = None,
             methods: Optional[Mapping[str, MethodSig]] = None) -> List[Tuple[Obligation, ProofResult]]:
    """pre ==> wp(extracted program, post), computed independently of the tree's obligations."""
    program = extract_program(unit)
    if has_holes(program):
        raise RefinementError(f"{unit.name} still has abstract statements")
    env = unit.base_env()
    env.update(declared_names(program))
    frames = {b.name: b.assignable for b in unit.blocks}
    w, aux = wp_concrete(program, unit.contract.post, methods, env, frames)
    obs = [Obligation(f"{unit.name}.posthoc", unit.contract.pre, w, "post-hoc verification condition", env)]
    for a in aux:
        obs.append(Obligation(f"{unit.name}.posthoc.{a.label}", a.hypothesis, a.conclusion,
                              "post-hoc verification condition", {**env, **dict(a.env)}))
    return discharge_all(obs, cfg)


def check_predicates(unit: MethodUnit):
    """Type-check the contract against the method's parameters and result."""
    try:
        check_predicate(unit.contract.pre, unit.base_env())
        check_predicate(resolve_old(unit.contract.post), unit.base_env())
    except KernelError as exc:
        raise RefinementError(f"{unit.name}: {exc.detail}") from None
