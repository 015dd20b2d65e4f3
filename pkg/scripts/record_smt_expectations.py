import json
from pathlib import Path

import z3

from cbcforge.project import build_units, load_project
from cbcforge.prover import check_implication
from cbcforge.refine import collect
from cbcforge.smt import emit_smt

FIXTURES_DIR = Path("fixtures")
PROJECTS = ["maxelement", "methods", "mutants/absolute", "mutants/branch", "mutants/invariant"]
OUT_FILE = Path("tests/data/smt_expectations.json")
TIMEOUT_MS = 20000


def solver_verdict(text: str) -> str:
    s = z3.Solver()
    s.set("timeout", TIMEOUT_MS)
    s.add(z3.parse_smt2_string(text.replace("(check-sat)\n", "")))
    return str(s.check())


if __name__ == '__main__':
    records = []
    for name in PROJECTS:
        project = load_project(FIXTURES_DIR / name)
        for unit, sigs in build_units(project):
            entries, _ = collect(unit, sigs)
            for e in entries:
                if e.obligation is None:
                    continue
                records.append({
                    "project": name,
                    "obligation_id": e.id,
                    "prover": check_implication(e.obligation, project.cfg).verdict,
                    "solver": solver_verdict(emit_smt(e.obligation, project.cfg)),
                })
    OUT_FILE.parent.mkdir(parents=True, exist_ok=True)
    OUT_FILE.write_text(json.dumps(records, indent=2), encoding="utf-8")
    print(f"Recorded {len(records)} obligations → {OUT_FILE}")
