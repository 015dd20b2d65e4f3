"""Named blocks with their own contracts.

Introducing a block replaces an abstract statement by a reference to the
block and checks that its contract fits the surrounding triple. Instantiating
it checks a concrete body against the block contract, the body verified as a
stand-alone method: accessible variables are its parameters, assignable ones
its mutable state, and its locals are renamed away from the enclosing method.
"""
from dataclasses import dataclass, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

from cbcforge.errors import BlockError, CbcError
from cbcforge.kernel import (
    RESULT, BlockRef, Contract, Repeat, Select, Seq, Statement, TypeName, Var, alpha_rename, assigned_names,
    declared_names, free_vars, old_names, resolve_old, statement_vars, substitute_all,
)
from cbcforge.logging_module import logger
from cbcforge.prover import Obligation
from cbcforge.refine import OPEN, MethodUnit, apply_block_ref, extract_program, has_holes, scope_at
from cbcforge.wp import MethodSig, wp_concrete

VOID = "void"

Frame = Tuple[Tuple[str, TypeName], ...]


@dataclass(frozen=True)
class BlockDecl:
    name: str
    contract: Contract
    accessible: Frame = ()
    assignable: Frame = ()
    instantiation: Optional[Statement] = None
    body: Optional[Statement] = None
    renaming: Tuple[Tuple[str, str], ...] = ()
    obligations: Tuple[Obligation, ...] = ()
    nested: Tuple[str, ...] = ()
    status: str = OPEN
    owner: str = ""

    @property
    def env(self) -> Dict[str, TypeName]:
        return {**dict(self.accessible), **dict(self.assignable)}

    @property
    def params(self) -> Frame:
        writable = {n for n, _ in self.assignable}
        return tuple((n, t) for n, t in self.accessible if n not in writable)


@dataclass(frozen=True)
class BlockMethod:
    """A block seen as a method: parameters, ambient state, contract and renamed body."""
    name: str
    params: Frame
    state: Frame
    return_type: TypeName
    contract: Contract
    body: Statement
    renaming: Tuple[Tuple[str, str], ...] = ()


def _frame(names: Sequence[str], env: Mapping[str, TypeName], block: str, what: str) -> Frame:
    out = []
    for n in names:
        if n not in env:
            raise BlockError(f"block {block}: {what} variable {n!r} is not in scope")
        out.append((n, env[n]))
    return tuple(out)


def declare_block(name: str, contract: Contract, accessible: Sequence[str], assignable: Sequence[str],
                  env: Mapping[str, TypeName], owner: str = "") -> BlockDecl:
    """A fresh open declaration, its variables typed from the scope where the block is used."""
    acc = _frame(accessible, env, name, "accessible")
    asg = _frame(assignable, env, name, "assignable")
    visible = {n for n, _ in acc + asg}
    stray = (free_vars(contract.pre) | free_vars(contract.post)) - visible
    if stray:
        raise BlockError(f"block {name}: contract mentions {', '.join(sorted(stray))}, "
                         f"which is neither accessible nor assignable")
    written = old_names(contract.post) & {n for n, _ in asg}
    if written:
        raise BlockError(f"block {name}: old() on assignable {', '.join(sorted(written))}")
    return BlockDecl(name, contract, acc, asg, owner=owner)


def introduce_block(unit: MethodUnit, node_id: str, name: str, contract: Contract,
                    accessible: Sequence[str], assignable: Sequence[str]) -> MethodUnit:
    """Refine ``node_id`` to ``block name;`` with side conditions pre ==> pre' and post' ==> post."""
    if unit.block(name) is not None:
        raise BlockError(f"{unit.name}: duplicate block name {name}")
    env = dict(scope_at(unit, node_id))
    decl = declare_block(name, contract, accessible, assignable, env, unit.name)
    params = {n for n, _ in unit.params}
    if params & {n for n, _ in decl.assignable}:
        raise BlockError(f"block {name}: parameters of {unit.name} cannot be assignable")
    unit = apply_block_ref(unit, node_id, BlockRef(name, contract.pre, contract.post))
    logger.debug(f"{unit.name}: block {name} introduced at {node_id}")
    return replace(unit, blocks=unit.blocks + (decl,))


def block_to_method(decl: BlockDecl, taken: Sequence[str] = ()) -> BlockMethod:
    """The verification unit of an instantiated block; locals colliding with ``taken`` are renamed."""
    if decl.instantiation is None:
        raise BlockError(f"block {decl.name} has no instantiation")
    body, renaming = alpha_rename(decl.instantiation, set(taken))
    params = decl.params
    post = resolve_old(decl.contract.post, [n for n, _ in params])
    return BlockMethod(decl.name, params, decl.assignable, VOID, Contract(decl.contract.pre, post),
                       body, tuple(sorted(renaming.items())))


def block_refs(s: Statement) -> Tuple[BlockRef, ...]:
    if isinstance(s, BlockRef):
        return (s,)
    if isinstance(s, Seq):
        return block_refs(s.first) + block_refs(s.second)
    if isinstance(s, Select):
        return tuple(r for _, b in s.branches for r in block_refs(b))
    if isinstance(s, Repeat):
        return block_refs(s.body)
    return ()


def instantiate_block(decl: BlockDecl, stmts: Statement, taken: Sequence[str] = (),
                      nested: Sequence[BlockDecl] = (),
                      methods: Optional[Mapping[str, MethodSig]] = None) -> BlockDecl:
    """Record ``stmts`` as the body of ``decl`` with the obligation pre ==> wp(body, post).

    ``nested`` declares the blocks referenced inside ``stmts``; they count as
    opaque calls through their contracts.
    """
    if decl.instantiation is not None:
        raise BlockError(f"block {decl.name} is already instantiated")
    if has_holes(stmts):
        raise BlockError(f"block {decl.name}: an instantiation cannot contain abstract statements")
    unit = block_to_method(replace(decl, instantiation=stmts), taken)
    body = unit.body
    inner = {d.name: d for d in nested}
    locals_ = declared_names(body)
    scope = {**decl.env, **locals_}
    refs = block_refs(body)
    for ref in refs:
        if ref.name not in inner:
            raise BlockError(f"block {decl.name}: nested block {ref.name} is not declared")
        for n, t in inner[ref.name].env.items():
            if scope.get(n) != t:
                raise BlockError(f"block {decl.name}: nested block {ref.name} uses {n!r} out of scope")
    own = {n for n, _ in decl.assignable} | set(locals_)
    for ref in refs:
        leaked = {n for n, _ in inner[ref.name].assignable} - own
        if leaked:
            raise BlockError(f"block {decl.name}: nested block {ref.name} assigns {', '.join(sorted(leaked))}")
    stray = assigned_names(body) - own
    if stray:
        raise BlockError(f"block {decl.name} assigns {', '.join(sorted(stray))}, "
                         f"which is not assignable")
    unknown = statement_vars(body) - set(scope)
    if unknown:
        raise BlockError(f"block {decl.name} uses {', '.join(sorted(unknown))}, "
                         f"which is neither accessible, assignable nor local")
    frames = {d.name: d.assignable for d in nested}
    try:
        w, aux = wp_concrete(body, unit.contract.post, methods, scope, frames)
    except CbcError as exc:
        raise BlockError(f"block {decl.name}: {exc.detail}") from None
    prefix = f"{decl.owner}.{decl.name}" if decl.owner else decl.name
    obs = [Obligation(f"{prefix}.inst", resolve_old(unit.contract.pre), w, f"block-instantiation {decl.name}",
                      scope)]
    for a in aux:
        obs.append(Obligation(f"{prefix}.inst.{a.label}", a.hypothesis, a.conclusion,
                              f"block-instantiation {decl.name}", {**scope, **dict(a.env)}))
    return replace(decl, instantiation=stmts, body=body, renaming=unit.renaming, obligations=tuple(obs),
                   nested=tuple(r.name for r in refs))


def instantiate_in_unit(unit: MethodUnit, name: str, stmts: Statement,
                        nested: Sequence[Tuple[str, Contract, Sequence[str], Sequence[str]]] = (),
                        methods: Optional[Mapping[str, MethodSig]] = None) -> MethodUnit:
    """Instantiate block ``name`` of ``unit``, registering the blocks ``stmts`` refers to.

    Each nested entry is ``(name, contract, accessible, assignable)``; its
    variables are typed in the scope of the instantiation.
    """
    decl = unit.block(name)
    if decl is None:
        raise BlockError(f"{unit.name}: no block {name}")
    scope = {**decl.env, **declared_names(stmts)}
    inner = []
    for child, contract, acc, asg in nested:
        if unit.block(child) is not None or child == name or any(d.name == child for d in inner):
            raise BlockError(f"{unit.name}: duplicate block name {child}")
        inner.append(declare_block(child, contract, acc, asg, scope, unit.name))
    stmts = _with_contracts(stmts, {d.name: d.contract for d in inner})
    # locals of enclosing instantiations are inlined around this one
    taken = set(unit.types()) | statement_vars(extract_program(unit)) | {RESULT}
    for b in unit.blocks:
        if b.body is not None:
            taken |= statement_vars(b.body)
    renaming = dict(block_to_method(replace(decl, instantiation=stmts), taken).renaming)
    inner = [_renamed(d, renaming) for d in inner]
    done = instantiate_block(decl, stmts, taken, inner, methods)
    blocks = tuple(done if b.name == name else b for b in unit.blocks) + tuple(inner)
    logger.debug(f"{unit.name}: block {name} instantiated, {len(done.obligations)} obligation(s)")
    return replace(unit, blocks=blocks)


def _renamed(decl: BlockDecl, renaming: Mapping[str, str]) -> BlockDecl:
    if not renaming:
        return decl
    sub = {k: Var(v) for k, v in renaming.items()}
    contract = Contract(substitute_all(decl.contract.pre, sub), substitute_all(decl.contract.post, sub))
    return replace(decl, contract=contract,
                   accessible=tuple((renaming.get(n, n), t) for n, t in decl.accessible),
                   assignable=tuple((renaming.get(n, n), t) for n, t in decl.assignable))


def _with_contracts(s: Statement, contracts: Mapping[str, Contract]) -> Statement:
    if isinstance(s, BlockRef) and s.name in contracts:
        c = contracts[s.name]
        return BlockRef(s.name, c.pre, c.post)
    if isinstance(s, Seq):
        return Seq(_with_contracts(s.first, contracts), _with_contracts(s.second, contracts))
    if isinstance(s, Select):
        return Select(tuple((g, _with_contracts(b, contracts)) for g, b in s.branches))
    if isinstance(s, Repeat):
        return Repeat(s.invariant, s.variant, s.guard, _with_contracts(s.body, contracts))
    return s
