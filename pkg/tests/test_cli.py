import json
import shutil

import pytest
from click.testing import CliRunner

from magic_markup.bench import bundled
from magic_markup.cli import cli
from magic_markup.client import RecordingClient, ScriptedClient
from magic_markup.model import Annotation, DocumentView, TextSegment, load_view, save_view, sidecar_path_for
from magic_markup.retag import RetagConfig, build_retag_prompt

from conftest import FIXTURES


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)

    return invoke


@pytest.fixture
def boy(tmp_path):
    doc = tmp_path / "boy.txt"
    doc.write_text("boy alad.", encoding="utf-8")
    return doc


def test_annot_add_list_rm(run, boy):
    r = run("annot", "add", boy, "--start", 4, "--end", 8, "--content", "a name", "--intent", "TRACK NAMES", "--id", "A1")
    assert r.exit_code == 0 and r.output.strip() == "A1"
    r = run("annot", "list", boy)
    assert r.exit_code == 0
    assert "A1" in r.output and "'alad'" in r.output and "[4,8)" in r.output
    assert "a name" in r.output and "TRACK NAMES" in r.output
    r = run("annot", "add", boy, "--anchor", "boy", "--id", "B")
    assert r.exit_code == 0
    ids = [a["id"] for a in json.loads(run("annot", "list", boy, "--json").output)]
    assert ids == ["A1", "B"]
    assert run("annot", "rm", boy, "B").exit_code == 0
    assert run("annot", "rm", boy, "nope").exit_code == 2
    assert boy.read_text(encoding="utf-8") == "boy alad."


def test_annot_add_errors(run, tmp_path):
    doc = tmp_path / "d.txt"
    doc.write_text("a = a + a", encoding="utf-8")
    r = run("annot", "add", doc, "--anchor", "a")
    assert r.exit_code == 2 and "--start/--end" in r.output
    assert run("annot", "add", doc, "--start", 3, "--end", 99).exit_code == 2
    assert run("annot", "add", doc).exit_code == 2
    assert run("annot", "add", doc, "--start", 0).exit_code == 2
    assert run("annot", "add", doc, "--start", 0, "--end", 1, "--id", "x").exit_code == 0
    assert run("annot", "add", doc, "--start", 0, "--end", 1, "--id", "x").exit_code == 2
    assert run("annot", "list", tmp_path / "missing.txt").exit_code == 2


def test_annot_list_stale(run, boy):
    run("annot", "add", boy, "--start", 4, "--end", 8)
    boy.write_text("boy alad!", encoding="utf-8")
    r = run("annot", "list", boy)
    assert r.exit_code == 2 and "StaleSidecar" in r.output


def test_retag_baseline_identity(run, tmp_path, boy):
    run("annot", "add", boy, "--start", 4, "--end", 8, "--id", "A1")
    new = tmp_path / "boy2.txt"
    shutil.copy(boy, new)
    old_sidecar = sidecar_path_for(boy).read_text(encoding="utf-8")
    r = run("retag", boy, new, "--resolver", "baseline")
    assert r.exit_code == 0 and "Unchanged" in r.output
    assert load_view(new).annotations[0].segment == TextSegment(4, 8, "alad")
    assert sidecar_path_for(boy).read_text(encoding="utf-8") == old_sidecar


def test_retag_orphan_exit_code(run, tmp_path, boy):
    run("annot", "add", boy, "--start", 4, "--end", 8, "--id", "A1")
    new = tmp_path / "new.txt"
    new.write_text("The young boy Aladdin wandered out.", encoding="utf-8")
    r = run("retag", boy, new, "--resolver", "baseline")
    assert r.exit_code == 1 and "Orphaned" in r.output
    assert load_view(new).annotations == ()
    assert run("retag", boy, new, "--resolver", "baseline", "--allow-failures").exit_code == 0


def test_retag_missing_sidecar_and_bad_flags(run, tmp_path, boy):
    assert run("retag", boy, boy, "--resolver", "baseline").exit_code == 2
    assert run("retag", boy, boy, "--delimiter", "**").exit_code == 2
    assert run("retag", boy, boy, "--max-parallel", 0).exit_code == 2
    assert run("retag", boy, boy, "--resolver", "magic").exit_code == 2


def test_retag_llm_without_key(run, tmp_path, boy):
    run("annot", "add", boy, "--start", 4, "--end", 8)
    r = run("retag", boy, boy)
    assert r.exit_code == 2 and "MAGIC_MARKUP_API_KEY" in r.output


def test_retag_appendix_with_replay(run, tmp_path):
    old, new = tmp_path / "original.c", tmp_path / "updated.c"
    shutil.copy(FIXTURES / "numitems" / "original.c", old)
    shutil.copy(FIXTURES / "numitems" / "updated.c", new)
    original = old.read_text(encoding="utf-8")
    start = original.index("<= numItems") + 3
    seg = TextSegment.of(original, start, start + 8)
    save_view(DocumentView(original, [Annotation("n", seg, "loop bound")]), sidecar_path_for(old), old)

    rec = RecordingClient(ScriptedClient([(FIXTURES / "numitems" / "answer.json").read_text(encoding="utf-8")]), "numitems")
    rec.complete(build_retag_prompt(original, seg, new.read_text(encoding="utf-8"), RetagConfig()))
    rec.save(tmp_path / "numitems.json")

    before = (old.read_bytes(), new.read_bytes())
    r = run("retag", old, new, "--fixtures", tmp_path / "numitems.json", "--report", tmp_path / "report.json")
    assert r.exit_code == 0, r.output
    assert "Moved" in r.output
    (ann,) = load_view(new).annotations
    assert ann.segment == TextSegment(305, 313, "numItems") and ann.content == "loop bound"
    assert (old.read_bytes(), new.read_bytes()) == before
    assert json.loads((tmp_path / "report.json").read_text())["outcomes"]["Moved"] == 1


def test_retag_with_different_model_misses_fixture(run, tmp_path):
    old = tmp_path / "a.txt"
    old.write_text("x", encoding="utf-8")
    run("annot", "add", old, "--start", 0, "--end", 1)
    rec = RecordingClient(ScriptedClient(['{"1":"x","2":1,"3":1}']))
    rec.complete(build_retag_prompt("x", TextSegment(0, 1, "x"), "x"))
    rec.save(tmp_path / "t.json")
    assert run("retag", old, old, "--fixtures", tmp_path / "t.json", "--out", tmp_path / "o.json").exit_code == 0
    r = run("retag", old, old, "--fixtures", tmp_path / "t.json", "--model", "other", "--out", tmp_path / "o.json")
    assert r.exit_code == 1 and "ReplayMiss" in r.output


def test_bench_validate_bundled(run):
    r = run("bench", "validate", "--suite", bundled("tcu10/suite.json"))
    assert r.exit_code == 0 and "10 case(s) OK" in r.output


def test_bench_validate_schema_violation(run, tmp_path):
    data = json.loads(bundled("tcu10/suite.json").read_text(encoding="utf-8"))
    data["version"] = 7
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data), encoding="utf-8")
    assert run("bench", "validate", "--suite", bad).exit_code == 2


def test_bench_run_replay_deterministic(run, tmp_path):
    args = ["bench", "run", "--suite", bundled("tcu10/suite.json"), "--fixtures", bundled("tcu10/answers_seeded.json")]
    a = run(*args, "--out", tmp_path / "a.json")
    b = run(*args, "--out", tmp_path / "b.json", "--max-parallel", 1)
    assert a.exit_code == 0 and a.output == b.output
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
    assert "OffByOneLine" in a.output and "accuracy (exact):   50.0%" in a.output
    c = run(*args, "--expand-retry")
    assert "accuracy (exact):   60.0%" in c.output


def test_bench_run_baseline(run):
    r = run("bench", "run", "--suite", bundled("tcu10/reformat.json"), "--resolver", "baseline")
    assert r.exit_code == 0 and "accuracy (exact):   100.0%" in r.output


def test_bench_gen_scripted(run, tmp_path):
    from test_bench import coffee

    specs = tmp_path / "specs.json"
    specs.write_text(json.dumps([{"language": "JSX", "snippet_type": "constant"}] * 2), encoding="utf-8")
    per_case = [coffee(n) for n in ("problem.txt", "solution.jsx", "snippet.txt", "delimited.jsx",
                                    "update_description.txt", "updated.jsx")]
    scripted = tmp_path / "scripted.json"
    scripted.write_text(json.dumps(per_case * 2), encoding="utf-8")
    r = run("bench", "gen", "--specs", specs, "--out", tmp_path / "s.json", "--scripted", scripted)
    assert r.exit_code == 0, r.output
    assert "2 accepted, 0 rejected" in r.output
    assert run("bench", "validate", "--suite", tmp_path / "s.json").exit_code == 0
    assert (tmp_path / "s.rejections.jsonl").read_text() == ""


def test_help_mentions_exit_codes(run):
    assert "Exit status" in run("--help").output
