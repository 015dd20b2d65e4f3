"""Report assembly and text rendering for the command line."""
from typing import Iterable, List, Optional, Sequence

from cbcforge.prover import Invalid, ProofResult, Unknown, Valid, json_value, render_value
from cbcforge.refine import TreeCheck
from cbcforge.schemas import CompositionCheckOut, Report, ReportItem
from cbcforge.traits import CompositionCheck, Flattening, MethodCheck


def item(obligation_id: str, provenance: str, result: Optional[ProofResult], reason: Optional[str] = None
         ) -> ReportItem:
    """One report line; a missing result means the obligation is still open."""
    if result is None:
        return ReportItem(obligation_id=obligation_id, provenance=provenance, result="open", reason=reason)
    if isinstance(result, Invalid):
        cex = {n: json_value(v) for n, v in result.counterexample}
        return ReportItem(obligation_id=obligation_id, provenance=provenance, result="invalid",
                          counterexample=cex, reason=reason)
    if isinstance(result, Unknown):
        return ReportItem(obligation_id=obligation_id, provenance=provenance, result="unknown",
                          reason=reason or result.reason)
    return ReportItem(obligation_id=obligation_id, provenance=provenance, result="valid", reason=reason)


def tree_items(check: TreeCheck) -> List[ReportItem]:
    return [item(e.id, e.provenance, e.result) for e in check.entries]


def check_report(checks: Sequence[TreeCheck], listing: Optional[str] = None) -> Report:
    items = [i for c in checks for i in tree_items(c)]
    return Report(command="check", items=items, listing=listing)


def method_item(c: MethodCheck) -> ReportItem:
    provenance = f"method {c.owner}.{c.method}"
    if c.error is not None:
        return ReportItem(obligation_id=c.id, provenance=provenance, result="invalid", reason=c.error)
    return item(c.id, provenance, c.result)


def composition_out(c: CompositionCheck) -> CompositionCheckOut:
    lines = [f"{label} is {_verdict(r)}" for label, r in c.implications]
    return CompositionCheckOut(method=f"{c.owner}.{c.method}", kept=c.kept, implications=lines)


def _verdict(r: ProofResult) -> str:
    if isinstance(r, Valid):
        return "valid"
    if isinstance(r, Invalid):
        return "invalid {" + ", ".join(f"{n}={render_value(v)}" for n, v in r.counterexample) + "}"
    return f"unknown ({r.reason})"


def _owned(owner: str, names: Optional[Iterable[str]]) -> bool:
    return names is None or owner in names


def flatten_report(f: Flattening, names: Optional[Sequence[str]] = None, listing: Optional[str] = None) -> Report:
    """Method checks and composition checks of the declarations in ``names`` (all if None).

    Diagnostics without an obligation of their own (conflicts, incompatible
    specifications, ill-formed tables) become items of their own.
    """
    wanted = None if names is None else set(names)
    items = [method_item(c) for c in f.methods if _owned(c.owner, wanted)]
    seen = {i.obligation_id for i in items}
    for d in f.diagnostics:
        if d.obligation is not None:
            continue
        owner = d.where.rsplit(": ", 1)[-1].split(".", 1)[0]
        if not _owned(owner, wanted):
            continue
        ident, k = f"{owner}.flatten", 1
        while ident in seen:
            k += 1
            ident = f"{owner}.flatten.{k}"
        seen.add(ident)
        cex = {n: json_value(v) for n, v in d.counterexample} if d.counterexample else None
        items.append(ReportItem(obligation_id=ident, provenance=d.where, result="invalid",
                                counterexample=cex, reason=d.message))
    compositions = [composition_out(c) for c in f.checks if _owned(c.owner, wanted)]
    return Report(command="flatten", items=items, compositions=compositions, listing=listing)


def render_text(report: Report) -> str:
    lines = []
    for i in report.items:
        lines.append(f"[{i.result}] {i.obligation_id}  ({i.provenance})")
        if i.counterexample:
            lines.append("    counterexample: " + ", ".join(f"{k}={v}" for k, v in i.counterexample.items()))
        if i.reason and i.result != "valid":
            lines.append(f"    {i.reason}")
    for c in report.compositions:
        kept = c.kept or "none"
        lines.append(f"compose {c.method}: kept {kept}")
        lines.extend(f"    {x}" for x in c.implications)
    if report.listing:
        lines.append(report.listing)
    if report.value is not None:
        lines.append(f"value: {report.value}")
    lines.append(f"overall: {report.overall} ({len(report.items)} item(s))")
    return "\n".join(lines)
