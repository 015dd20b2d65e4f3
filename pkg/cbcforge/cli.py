"""Command line: ``cbcforge check|flatten|run|emit-smt [flags] <project-dir>``.

Exit status 0 means pass, 1 a failed or open obligation, 2 a usage or parse error.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from cbcforge.config import FUEL, PROVER_BOUND, PROVER_BOUND_OVERRIDE, SEQ_ELEM_BOUND, SEQ_LEN, WORKERS
from cbcforge.errors import CbcError, FuelExhausted, SmtError, StuckError
from cbcforge.interp import evaluate, show_value
from cbcforge.kernel import Call, New, SeqLit
from cbcforge.logging_module import logger
from cbcforge.project import Project, build_units, load_project
from cbcforge.refine import check_tree, collect, render_program
from cbcforge.report import check_report, flatten_report, render_text
from cbcforge.schemas import ProverConfig, Report, ReportItem
from cbcforge.smt import emit_smt, smt_file_name
from cbcforge.syntax import parse_expr, show_body
from cbcforge.traits import flatten_report as flatten_traits

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def cmd_check(project: Project, methods: Sequence[str] = (), workers: int = 1, show_program: bool = False) -> Report:
    """Check the refinement tree of every targeted method, its blocks included."""
    checks = [check_tree(unit, project.cfg, sigs, workers) for unit, sigs in build_units(project, methods)]
    listing = "\n\n".join(render_program(c.unit) for c in checks) if show_program and checks else None
    return check_report(checks, listing)


def cmd_flatten(project: Project, name: Optional[str] = None, workers: int = 1) -> Report:
    """Flatten the trait table; on success list the flattened bodies."""
    declared = {d.name: d for d in project.traits}
    if name is not None and name not in declared:
        raise CbcError(f"no trait or class named {name}")
    result = flatten_traits(project.traits, project.cfg, workers)
    names = [name] if name is not None else list(declared)
    listing = None
    if result.ok and names:
        listing = "\n\n".join(show_body(result.table.bodies[n], n, declared[n].kind) for n in names)
    return flatten_report(result, None if name is None else names, listing)


def _literals(text: str, what: str):
    if not text.strip():
        return ()
    e = parse_expr(f"[{text}]", what)
    if not isinstance(e, SeqLit):
        raise CbcError(f"{what}: expected a comma separated list of literals")
    return e.elems


def cmd_run(project: Project, target: str, args: str = "", fields: str = "", fuel: int = FUEL,
            workers: int = 1) -> Report:
    """Evaluate ``new C(fields).m(args)`` over the flattened table."""
    cls, dot, method = target.partition(".")
    if not dot or not cls or not method:
        raise CbcError(f"target must be Class.method, got {target!r}")
    result = flatten_traits(project.traits, project.cfg, workers)
    if not result.ok:
        report = flatten_report(result)
        return Report(command="run", items=report.items, overall="fail")
    body = result.table.bodies.get(cls)
    if body is None or not result.table.is_class(cls):
        raise CbcError(f"no class named {cls}")
    if body.method(method) is None:
        raise CbcError(f"{cls} has no method {method}")
    call = Call(New(cls, _literals(fields, "--fields")), method, _literals(args, "--args"))
    try:
        value = evaluate(result.table, call, fuel)
    except FuelExhausted as exc:
        item = ReportItem(obligation_id=f"{target}.run", provenance="evaluation", result="unknown",
                          reason=exc.detail)
        return Report(command="run", items=[item])
    except StuckError as exc:
        logger.error(f"{target}: stuck term in a flattened table: {exc.detail}")
        item = ReportItem(obligation_id=f"{target}.run", provenance="evaluation", result="invalid",
                          reason=f"stuck: {exc.detail}")
        return Report(command="run", items=[item])
    return Report(command="run", value=show_value(value))


def cmd_emit_smt(project: Project, out: Path, bounded: bool = False, methods: Sequence[str] = ()) -> Report:
    """Write one SMT-LIB2 script per obligation of the targeted methods."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CbcError(f"cannot create {out}: {exc.strerror}") from None
    cfg = project.cfg if bounded else None
    written: List[str] = []
    items: List[ReportItem] = []
    for unit, sigs in build_units(project, methods):
        entries, _ = collect(unit, sigs)
        for e in entries:
            if e.obligation is None:
                continue
            try:
                text = emit_smt(e.obligation, cfg)
            except SmtError as exc:
                items.append(ReportItem(obligation_id=e.id, provenance=e.provenance, result="unknown",
                                        reason=exc.detail))
                continue
            path = out / smt_file_name(e.obligation)
            try:
                path.write_text(text, encoding="utf-8")
            except OSError as exc:
                raise CbcError(f"cannot write {path}: {exc.strerror}") from None
            written.append(path.name)
    logger.info(f"wrote {len(written)} SMT-LIB script(s) to {out}")
    return Report(command="emit-smt", items=items, listing="\n".join(written) or None)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--int-bound", type=int, default=PROVER_BOUND, help="integers range over [-N, N]")
    common.add_argument("--seq-len", type=int, default=SEQ_LEN, help="longest enumerated list")
    common.add_argument("--seq-elem-bound", type=int, default=SEQ_ELEM_BOUND, help="list elements in [-N, N]")
    common.add_argument("--json", action="store_true", help="print the report as JSON")
    common.add_argument("--workers", type=int, default=WORKERS, help="parallel obligation discharge")
    common.add_argument("project", help="project directory")

    parser = argparse.ArgumentParser(prog="cbcforge", description="Correctness-by-construction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common], help="check refinement scripts")
    check.add_argument("--method", action="append", default=[], help="only this method (repeatable)")
    check.add_argument("--show-program", action="store_true", help="print the extracted programs")

    flatten = sub.add_parser("flatten", parents=[common], help="flatten and verify the trait table")
    flatten.add_argument("--name", help="only this trait or class")

    run = sub.add_parser("run", parents=[common], help="evaluate a method of a flattened class")
    run.add_argument("--target", required=True, help="Class.method")
    run.add_argument("--args", default="", help="comma separated argument literals, e.g. \"[3, 1, 2]\"")
    run.add_argument("--fields", default="", help="constructor arguments of the receiver")
    run.add_argument("--fuel", type=int, default=FUEL, help="reduction step budget")

    emit = sub.add_parser("emit-smt", parents=[common], help="export obligations as SMT-LIB2")
    emit.add_argument("--out", default="smt", help="output directory")
    emit.add_argument("--bounded", action="store_true", help="assert the prover bounds in every script")
    emit.add_argument("--method", action="append", default=[], help="only this method (repeatable)")
    return parser


def _config(args) -> ProverConfig:
    int_bound = PROVER_BOUND if PROVER_BOUND_OVERRIDE else args.int_bound
    return ProverConfig(int_bound=int_bound, max_seq_len=args.seq_len, seq_elem_bound=args.seq_elem_bound)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        project = load_project(args.project, _config(args))
        logger.info(f"{args.command} {project.root}")
        if args.command == "check":
            report = cmd_check(project, args.method, args.workers, args.show_program)
        elif args.command == "flatten":
            report = cmd_flatten(project, args.name, args.workers)
        elif args.command == "run":
            report = cmd_run(project, args.target, args.args, args.fields, args.fuel, args.workers)
        else:
            report = cmd_emit_smt(project, Path(args.out), args.bounded, args.method)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CbcError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return EXIT_USAGE
    print(report.json(indent=2) if args.json else render_text(report))
    return EXIT_PASS if report.overall == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
