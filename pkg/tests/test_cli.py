import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from chm.cli import EXIT_DATAERR, EXIT_NOINPUT, EXIT_USAGE, main

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
SCHEMA = json.loads((ROOT / "docs" / "verdict.schema.json").read_text())


def run_main(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_well_typed_prints_schemes(capsys):
    code, out, _ = run_main(["check", str(CORPUS / "p_and_q.ch")], capsys)
    assert code == 0
    assert "p :" in out and "q :" in out
    assert "verdict: WellTyped" in out


def test_check_ill_typed_exit_one(capsys):
    code, out, _ = run_main(["check", str(CORPUS / "test_no_pt.ch")], capsys)
    assert code == 1
    assert "Incorrect" in out and "Foo" in out


def test_dump_chrs_shows_definition_rules(capsys):
    code, out, _ = run_main(
        ["check", "--dump-chrs", str(CORPUS / "simple1.ch")], capsys
    )
    assert code == 0
    assert "g(t, l) ⇔" in out
    assert "f(t, l) ⇔" in out
    assert "→" in out


def test_trace_output(capsys):
    code, out, _ = run_main(["check", "--trace", str(CORPUS / "simple1.ch")], capsys)
    assert code == 0
    assert "⤳_g" in out and "result: final" in out


def test_json_output_validates(capsys):
    for name in ("p_and_q.ch", "test_no_pt.ch", "mono_clash.ch", "empty.ch"):
        code, out, _ = run_main(["check", "--json", str(CORPUS / name)], capsys)
        doc = json.loads(out)
        jsonschema.validate(doc, SCHEMA)


def test_json_output_validates_for_every_corpus_file(capsys):
    paths = sorted(str(p) for p in CORPUS.glob("*.ch"))
    _, out, _ = run_main(["check", "--json", *paths], capsys)
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert len(doc["files"]) == len(paths)


def test_missing_file_exit_code(capsys):
    code, _, err = run_main(["check", "no_such_file.ch"], capsys)
    assert code == EXIT_NOINPUT
    assert "no_such_file.ch" in err


def test_usage_error_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "chm.cli", "check"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_USAGE


def test_parse_error_reported_as_ill_typed(tmp_path, capsys):
    bad = tmp_path / "bad.ch"
    bad.write_text("f = (;")
    code, out, _ = run_main(["check", str(bad)], capsys)
    assert code == 1
    assert "error" in out


def test_exit_code_aggregates_max(capsys):
    code, _, _ = run_main(
        ["check", str(CORPUS / "p_and_q.ch"), str(CORPUS / "mono_clash.ch")], capsys
    )
    assert code == 1


def test_fuel_flag_and_env(tmp_path, capsys, monkeypatch):
    src = CORPUS / "p_and_q.ch"
    code, out, _ = run_main(["check", "--fuel", "3", str(src)], capsys)
    assert code == 2  # fuel exhausted -> Unknown
    monkeypatch.setenv("CHM_FUEL", "3")
    code, out, _ = run_main(["check", str(src)], capsys)
    assert code == 2
    monkeypatch.setenv("CHM_FUEL", "10000")
    code, out, _ = run_main(["check", str(src)], capsys)
    assert code == 0


def test_no_forced_calls_flag(capsys):
    src = CORPUS / "lazy_uncalled.ch"
    assert run_main(["check", str(src)], capsys)[0] == 1
    assert run_main(["check", "--no-forced-calls", str(src)], capsys)[0] == 0


def test_output_is_stable_across_runs():
    cmd = [sys.executable, "-m", "chm.cli", "check", str(CORPUS / "p_and_q.ch")]
    a = subprocess.run(cmd, capture_output=True, text=True)
    b = subprocess.run(cmd, capture_output=True, text=True)
    assert a.stdout == b.stdout and a.returncode == b.returncode == 0
    cmd = [sys.executable, "-m", "chm.cli", "check", "--trace", "--dump-chrs",
           str(CORPUS / "erk_foo.ch")]
    a = subprocess.run(cmd, capture_output=True, text=True)
    b = subprocess.run(cmd, capture_output=True, text=True)
    assert a.stdout == b.stdout


# -- corpus runner -----------------------------------------------------------------


def test_corpus_all_pass(capsys):
    code, out, _ = run_main(["corpus", str(CORPUS)], capsys)
    assert code == 0
    assert "FAIL" not in out


def test_corpus_empty_dir(tmp_path, capsys):
    code, out, _ = run_main(["corpus", str(tmp_path)], capsys)
    assert code == 0
    assert "0/0 passed" in out


def test_corpus_missing_sidecar(tmp_path, capsys):
    (tmp_path / "a.ch").write_text("f x = x;")
    code, _, err = run_main(["corpus", str(tmp_path)], capsys)
    assert code == EXIT_DATAERR
    assert "missing sidecar" in err


def test_corpus_corrupt_sidecar(tmp_path, capsys):
    (tmp_path / "a.ch").write_text("f x = x;")
    (tmp_path / "a.expect").write_text("{not json")
    code, _, err = run_main(["corpus", str(tmp_path)], capsys)
    assert code == EXIT_DATAERR
    assert "a.expect" in err


def test_corpus_reports_mismatch(tmp_path, capsys):
    (tmp_path / "a.ch").write_text("f x = x;")
    (tmp_path / "a.expect").write_text(json.dumps({"verdict": "IllTyped"}))
    code, out, _ = run_main(["corpus", str(tmp_path)], capsys)
    assert code == 1
    assert "FAIL" in out
