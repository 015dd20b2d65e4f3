"""Project directories: refinement scripts, trait files and composition files.

A project is a directory holding ``*.cbc`` refinement scripts and ``*.trait``
and ``*.tc`` trait files. Files are read in sorted order; all trait files form
one table.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from cbcforge.block import block_refs, instantiate_in_unit, introduce_block
from cbcforge.calculus import TraitTable
from cbcforge.errors import BlockError, CbcError, RefinementError
from cbcforge.logging_module import logger
from cbcforge.refine import APPLY, MethodUnit, apply_method_call, check_predicates, new_unit
from cbcforge.schemas import ProverConfig
from cbcforge.syntax import BlockScript, CbcScript, MethodScript, parse_cbc, parse_traits
from cbcforge.wp import MethodSig

CBC_SUFFIX = ".cbc"
TRAIT_SUFFIXES = (".trait", ".tc")


@dataclass
class Project:
    root: Path
    cbc_files: List[Path] = field(default_factory=list)
    trait_files: List[Path] = field(default_factory=list)
    tc_files: List[Path] = field(default_factory=list)
    cfg: ProverConfig = field(default_factory=ProverConfig)
    scripts: List[CbcScript] = field(default_factory=list)
    traits: TraitTable = field(default_factory=TraitTable)

    def method_scripts(self) -> List[Tuple[MethodScript, CbcScript]]:
        return [(m, s) for s in self.scripts for m in s.methods]

    def signatures(self) -> Dict[str, MethodSig]:
        return {m.name: MethodSig(m.name, m.params, m.return_type, m.contract) for m, _ in self.method_scripts()}


def load_project(root, cfg: Optional[ProverConfig] = None) -> Project:
    """Parse every file of ``root``; a ParseError names the file, line and column."""
    root = Path(root)
    if not root.is_dir():
        raise CbcError(f"{root} is not a project directory")
    project = Project(root, cfg=cfg or ProverConfig())
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        if path.suffix == CBC_SUFFIX:
            project.cbc_files.append(path)
            project.scripts.append(parse_cbc(path.read_text(encoding="utf-8"), str(path)))
        elif path.suffix in TRAIT_SUFFIXES:
            (project.trait_files if path.suffix == ".trait" else project.tc_files).append(path)
            project.traits = project.traits.merged(parse_traits(path.read_text(encoding="utf-8"), str(path)))
    names = [m.name for m, _ in project.method_scripts()]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise RefinementError(f"{root}: method(s) defined more than once: {', '.join(dupes)}")
    logger.info(f"loaded {root}: {len(project.cbc_files)} refinement script(s), "
                f"{len(project.trait_files) + len(project.tc_files)} trait file(s)")
    return project


def _blocks_by_name(script: CbcScript) -> Dict[str, BlockScript]:
    out: Dict[str, BlockScript] = {}
    for b in script.blocks:
        if b.name in out:
            raise BlockError(f"{script.source}:{b.line}: block {b.name} is defined twice")
        out[b.name] = b
    return out


def _at(source: str, line: int, exc: CbcError) -> CbcError:
    cls = BlockError if isinstance(exc, BlockError) else RefinementError
    return cls(f"{source}:{line}: {exc.detail}")


def build_unit(script: MethodScript, blocks: Mapping[str, BlockScript],
               methods: Optional[Mapping[str, MethodSig]] = None, source: str = "<input>") -> MethodUnit:
    """Replay the refinement steps of ``script`` and instantiate every block it reaches."""
    methods = dict(methods or {})
    unit = new_unit(script.name, script.params, script.return_type, script.contract, script.state)
    try:
        check_predicates(unit)
    except CbcError as exc:
        raise _at(source, script.line, exc) from None
    for step in script.steps:
        try:
            unit = _apply(unit, step.node, step.rule, step.args, blocks, methods)
        except CbcError as exc:
            raise _at(source, step.line, exc) from None
    done = set()
    while True:
        todo = [b.name for b in unit.blocks if b.body is None and b.name in blocks and b.name not in done]
        if not todo:
            break
        name = todo[0]
        done.add(name)
        bs = blocks[name]
        nested = []
        for ref in block_refs(bs.body):
            if ref.name not in blocks:
                raise BlockError(f"{source}:{bs.line}: block {name} uses undefined block {ref.name}")
            child = blocks[ref.name]
            nested.append((child.name, child.contract, child.accessible, child.assignable))
        try:
            unit = instantiate_in_unit(unit, name, bs.body, nested, methods)
        except CbcError as exc:
            raise _at(source, bs.line, exc) from None
    return unit


def _apply(unit: MethodUnit, node: str, rule: str, args: Mapping, blocks: Mapping[str, BlockScript],
           methods: Mapping[str, MethodSig]) -> MethodUnit:
    if rule in APPLY:
        return APPLY[rule](unit, node, args)
    if rule == "call":
        callee = methods.get(args["method"])
        if callee is None:
            raise RefinementError(f"call of unknown method {args['method']}")
        return apply_method_call(unit, node, callee, args["args"], args["target"])
    if rule == "block":
        bs = blocks.get(args["name"])
        if bs is None:
            raise BlockError(f"block {args['name']} has no definition")
        return introduce_block(unit, node, bs.name, bs.contract, bs.accessible, bs.assignable)
    raise RefinementError(f"unknown rule {rule}")


def build_units(project: Project, only: Sequence[str] = ()) -> List[Tuple[MethodUnit, Dict[str, MethodSig]]]:
    """Each targeted unit with the signatures its calls may use: every other method of the project."""
    sigs = project.signatures()
    wanted = set(only)
    missing = wanted - set(sigs)
    if missing:
        raise CbcError(f"no method named {', '.join(sorted(missing))}")
    out = []
    for script in project.scripts:
        blocks = _blocks_by_name(script)
        used = set()
        for m in script.methods:
            if wanted and m.name not in wanted:
                continue
            methods = {n: s for n, s in sigs.items() if n != m.name}
            unit = build_unit(m, blocks, methods, script.source)
            used |= {b.name for b in unit.blocks}
            out.append((unit, methods))
        if not wanted:
            for name in sorted(set(blocks) - used):
                logger.warning(f"{script.source}: block {name} is never used")
    return out
