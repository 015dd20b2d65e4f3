"""Bounded SMT export against recorded solver verdicts (scripts/record_smt_expectations.py)."""
import json
from pathlib import Path

import pytest

from cbcforge.project import build_units, load_project
from cbcforge.prover import check_implication
from cbcforge.refine import collect
from cbcforge.smt import emit_smt
from tests.conftest import FIXTURES

EXPECTATIONS = Path(__file__).resolve().parent / "data" / "smt_expectations.json"
SOLVER_FOR = {"valid": "unsat", "invalid": "sat"}

pytestmark = pytest.mark.skipif(not EXPECTATIONS.exists(), reason="no recorded solver verdicts")


def recorded():
    if not EXPECTATIONS.exists():
        return []
    return json.loads(EXPECTATIONS.read_text(encoding="utf-8"))


def obligations(project_name):
    project = load_project(FIXTURES / project_name)
    out = {}
    for unit, sigs in build_units(project):
        entries, _ = collect(unit, sigs)
        out.update({e.id: e.obligation for e in entries if e.obligation is not None})
    return project.cfg, out


@pytest.mark.parametrize("project_name", sorted({r["project"] for r in recorded()}))
def test_recorded_verdicts(project_name):
    z3 = pytest.importorskip("z3")
    cfg, obs = obligations(project_name)
    for r in (r for r in recorded() if r["project"] == project_name):
        ob = obs[r["obligation_id"]]
        assert check_implication(ob, cfg).verdict == r["prover"], r["obligation_id"]
        if r["solver"] == "unknown":
            continue
        assert SOLVER_FOR.get(r["prover"]) == r["solver"], r["obligation_id"]
        s = z3.Solver()
        s.set("timeout", 20000)
        s.add(z3.parse_smt2_string(emit_smt(ob, cfg).replace("(check-sat)\n", "")))
        assert str(s.check()) in (r["solver"], "unknown"), r["obligation_id"]
