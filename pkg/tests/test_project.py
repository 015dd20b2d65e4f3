import pytest

from cbcforge.calculus import CLASS
from cbcforge.cli import cmd_check, cmd_emit_smt, cmd_flatten, cmd_run
from cbcforge.errors import BlockError, CbcError, ParseError, RefinementError
from cbcforge.kernel import Repeat, Select, Seq
from cbcforge.project import build_units, load_project
from cbcforge.refine import FAILED, PROVEN, check_tree, extract_program, post_hoc
from cbcforge.syntax import parse_statements, parse_traits
from tests.conftest import FIXTURES

MAXELEMENT_IDS = [
    "maxElement.A3.declare",
    "maxElement.A4.declare",
    "maxElement.A5.block.pre",
    "maxElement.A5.block.post",
    "maxElement.A6.assign",
    "maxElement.B1.inst",
    "maxElement.B1.inst.loop1.exit",
    "maxElement.B1.inst.loop1.preserve",
    "maxElement.B1.inst.loop1.variant",
    "maxElement.B2.inst",
]


def test_load_project_sorts_files():
    project = load_project(FIXTURES / "methods")
    assert [p.name for p in project.cbc_files] == ["arith.cbc", "lists.cbc"]
    assert set(project.signatures()) == {"absolute", "maxOfTwo", "sign", "identity", "clampZero",
                                         "keepPositive", "twice", "magnitude", "sumTo", "firstOrZero", "search"}


def test_missing_directory():
    with pytest.raises(CbcError):
        load_project(FIXTURES / "nowhere")


def test_maxelement_is_proven():
    project = load_project(FIXTURES / "maxelement")
    report = cmd_check(project)
    assert [i.obligation_id for i in report.items] == MAXELEMENT_IDS
    assert {i.result for i in report.items} == {"valid"}
    assert report.overall == "pass"


def test_maxelement_post_hoc():
    project = load_project(FIXTURES / "maxelement")
    ((unit, sigs),) = build_units(project)
    check = check_tree(unit, project.cfg, sigs)
    assert check.status == PROVEN
    assert {b.name: b.status for b in check.unit.blocks} == {"B1": PROVEN, "B2": PROVEN}
    assert all(r.verdict == "valid" for _, r in post_hoc(unit, project.cfg, sigs))


METHOD_NAMES = ["absolute", "maxOfTwo", "sign", "identity", "clampZero", "keepPositive", "twice", "magnitude",
                "sumTo", "firstOrZero", "search"]


@pytest.mark.parametrize("name", METHOD_NAMES)
def test_post_hoc_agrees_on_proven_methods(name):
    project = load_project(FIXTURES / "methods")
    ((unit, sigs),) = build_units(project, [name])
    assert check_tree(unit, project.cfg, sigs).status == PROVEN
    results = post_hoc(unit, project.cfg, sigs)
    assert results[0][0].id == f"{name}.posthoc"
    assert [(ob.id, r.verdict) for ob, r in results if r.verdict != "valid"] == []


@pytest.mark.parametrize("mutant", ["absolute", "branch"])
def test_post_hoc_agrees_on_broken_programs(mutant):
    project = load_project(FIXTURES / "mutants" / mutant)
    ((unit, sigs),) = build_units(project)
    assert check_tree(unit, project.cfg, sigs).status == FAILED
    assert any(r.verdict == "invalid" for _, r in post_hoc(unit, project.cfg, sigs))


def test_every_method_fixture_is_proven():
    report = cmd_check(load_project(FIXTURES / "methods"))
    bad = [(i.obligation_id, i.result, i.reason) for i in report.items if i.result != "valid"]
    assert bad == []
    assert report.overall == "pass"
    ids = {i.obligation_id for i in report.items}
    assert {"magnitude.A0.call.pre", "magnitude.A0.call.post", "sumTo.A2.variant", "search.Find.inst"} <= ids


def test_only_selected_methods():
    report = cmd_check(load_project(FIXTURES / "methods"), ["twice"])
    assert [i.obligation_id for i in report.items] == ["twice.A1.declare", "twice.A2.assign"]
    with pytest.raises(CbcError):
        cmd_check(load_project(FIXTURES / "methods"), ["nope"])


MAXELEMENT_PROGRAM = """
int i = list.get(0);
int j = 1;
loop_invariant list.contains(i) && j > 0 && j <= list.size()
  && (forall q in indices(list): q < j ==> i >= list.get(q));
decreases list.size() - j;
while (j < list.size()) {
  if (list.get(j) > i) {
    i = list.get(j);
  }
  j = j + 1;
}
result = i;
"""


def flat(s):
    """``s`` with every sequence nested to the right."""
    if isinstance(s, Seq):
        parts = []
        for part in (s.first, s.second):
            part = flat(part)
            while isinstance(part, Seq):
                parts.append(part.first)
                part = part.second
            parts.append(part)
        out = parts[-1]
        for part in reversed(parts[:-1]):
            out = Seq(part, out)
        return out
    if isinstance(s, Select):
        return Select(tuple((g, flat(b)) for g, b in s.branches))
    if isinstance(s, Repeat):
        return Repeat(s.invariant, s.variant, s.guard, flat(s.body))
    return s


def test_show_program_lists_the_extracted_code():
    project = load_project(FIXTURES / "maxelement")
    report = cmd_check(project, show_program=True)
    lines = report.listing.splitlines()
    assert lines[:4] == [
        "int maxElement(seq list)",
        "requires list.size() > 0;",
        "ensures list.contains(result) && (forall q in indices(list): result >= list.get(q));",
        "{",
    ]
    assert lines[-1] == "}"
    listed = flat(parse_statements("\n".join(lines[4:-1])))
    assert listed == flat(parse_statements(MAXELEMENT_PROGRAM))
    ((unit, _),) = build_units(project)
    assert listed == flat(extract_program(unit))


@pytest.mark.parametrize("mutant, obligation, counterexample", [
    ("branch", "maxElement.B2.inst", {"i": -2, "j": 1, "list": [-2, -1]}),
    ("invariant", "maxElement.B1.inst.loop1.preserve", {"i": -2, "j": 0, "list": [-2]}),
    ("absolute", "absolute.A2.assign", {"x": -4}),
])
def test_mutants_are_caught(mutant, obligation, counterexample):
    report = cmd_check(load_project(FIXTURES / "mutants" / mutant))
    failed = [i for i in report.items if i.result == "invalid"]
    assert failed[0].obligation_id == obligation
    assert failed[0].counterexample == counterexample
    assert report.overall == "fail"


def test_weakened_invariant_also_breaks_the_variant():
    report = cmd_check(load_project(FIXTURES / "mutants" / "invariant"))
    results = {i.obligation_id: i.result for i in report.items}
    assert results["maxElement.B1.inst.loop1.variant"] == "invalid"
    assert results["maxElement.B2.inst"] == "valid"


def test_empty_project_passes(tmp_path):
    report = cmd_check(load_project(tmp_path))
    assert report.items == []
    assert report.overall == "pass"


def write(tmp_path, name, text):
    (tmp_path / name).write_text(text)
    return tmp_path


def test_open_script_reports_open(tmp_path):
    write(tmp_path, "f.cbc", "method int f(int x) requires true; ensures result == x; "
                             "{ refine A0 selection (x > 0) (x <= 0); refine A1 assignment result = x; }")
    report = cmd_check(load_project(tmp_path))
    assert [i.result for i in report.items] == ["valid", "valid", "open"]
    assert report.items[-1].obligation_id == "f.A2.abstract"
    assert report.overall == "open"


def test_misapplied_rule_names_the_line(tmp_path):
    write(tmp_path, "f.cbc", "method int f(int x)\n requires true;\n ensures result == x;\n{\n"
                             " refine A0 assignment result = x;\n refine A0 skip;\n}\n")
    with pytest.raises(RefinementError) as info:
        cmd_check(load_project(tmp_path))
    assert ":6:" in info.value.detail


def test_missing_block_definition(tmp_path):
    write(tmp_path, "f.cbc", "method int f(int x) requires true; ensures result == x; { refine A0 block B; }")
    with pytest.raises(BlockError):
        cmd_check(load_project(tmp_path))


def test_duplicate_methods_across_files(tmp_path):
    text = "method int f(int x) requires true; ensures result == x; { }"
    write(tmp_path, "a.cbc", text)
    write(tmp_path, "b.cbc", text)
    with pytest.raises(RefinementError):
        load_project(tmp_path)


def test_parse_errors_name_the_file(tmp_path):
    write(tmp_path, "bad.cbc", "method int f(int x) requires true ensures result == x; { }")
    with pytest.raises(ParseError) as info:
        load_project(tmp_path)
    assert info.value.source.endswith("bad.cbc")


def test_flatten_traits():
    report = cmd_flatten(load_project(FIXTURES / "traits"))
    assert report.overall == "pass", [(i.obligation_id, i.reason) for i in report.items if i.result != "valid"]
    ids = {i.obligation_id for i in report.items}
    assert {"MaxETrait2.maxElement", "MaxETrait4.maxTail", "MaxE.maxElement.measure",
            "MinEClass.minElement.measure", "Pair.sum", "Measurer.twice"} <= ids


MINECLASS = """
class MinEClass {
  @Pre: list.size() > 0
  @Post: list.contains(result) && (forall Num n: list.contains(n) ==> result <= n)
  @Measure: list.size()
  Num minElement(List list) =
    if (list.size() == 1) {accessHead(list)}
    elseif (accessHead(list) <= minElement(list.tail())) {accessHead(list)}
    else {minElement(list.tail())}

  @Pre: list.size() > 0
  @Post: result == list.element()
  Num accessHead(List list) = list.element()
}
"""


def test_flatten_one_name_lists_its_body():
    report = cmd_flatten(load_project(FIXTURES / "traits"), "MinEClass")
    assert report.overall == "pass"
    listed = parse_traits(report.listing).get("MinEClass")
    assert listed.kind == CLASS
    assert listed.expr.body == parse_traits(MINECLASS).get("MinEClass").expr.body
    (comp,) = report.compositions
    assert comp.method == "MinEClass.accessHead"
    assert comp.kept == "right"
    assert comp.implications == [
        "pre: list.size() > 0 ==> list.size() > 0 is valid",
        "post: result == list.element() ==> result == list.element() is valid",
    ]
    with pytest.raises(CbcError):
        cmd_flatten(load_project(FIXTURES / "traits"), "Nope")


def test_conflict_fails_the_flattening():
    report = cmd_flatten(load_project(FIXTURES / "conflict"))
    assert report.overall == "fail"
    (item,) = [i for i in report.items if i.result == "invalid"]
    assert item.obligation_id == "Both.flatten"
    assert "implemented twice" in item.reason


@pytest.mark.parametrize("target, args, fields, expected", [
    ("MaxE.maxElement", "[3, 1, 2]", "", "3"),
    ("MaxE.maxElement", "[5]", "", "5"),
    ("MinEClass.minElement", "[3, 1, 2]", "", "1"),
    ("Pair.sum", "", "1, 2", "3"),
    ("Pair.larger", "", "4, 9", "9"),
])
def test_run(target, args, fields, expected):
    report = cmd_run(load_project(FIXTURES / "traits"), target, args, fields)
    assert report.value == expected
    assert report.overall == "pass"


def test_run_rejects_unknown_targets():
    project = load_project(FIXTURES / "traits")
    with pytest.raises(CbcError):
        cmd_run(project, "MaxETrait2.maxElement", "[1]")
    with pytest.raises(CbcError):
        cmd_run(project, "MaxE", "[1]")
    with pytest.raises(CbcError):
        cmd_run(project, "MaxE.nope", "[1]")


def test_run_out_of_fuel():
    report = cmd_run(load_project(FIXTURES / "traits"), "MaxE.maxElement", "[3, 1, 2]", fuel=3)
    (item,) = report.items
    assert item.result == "unknown"
    assert report.overall == "fail"


def test_run_stuck_on_a_precondition_violation():
    report = cmd_run(load_project(FIXTURES / "traits"), "MaxE.maxElement", "[]")
    (item,) = report.items
    assert item.result == "invalid"
    assert item.reason.startswith("stuck")


def test_emit_smt_writes_one_file_per_obligation(tmp_path):
    project = load_project(FIXTURES / "maxelement")
    report = cmd_emit_smt(project, tmp_path / "out")
    names = report.listing.splitlines()
    assert len(names) == len(MAXELEMENT_IDS)
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == sorted(names)
    assert "maxElement.B2.inst.smt2" in names
    first = (tmp_path / "out" / "maxElement.B2.inst.smt2").read_text()
    cmd_emit_smt(project, tmp_path / "again")
    assert (tmp_path / "again" / "maxElement.B2.inst.smt2").read_text() == first
    assert report.overall == "pass"
