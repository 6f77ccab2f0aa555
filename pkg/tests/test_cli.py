import json

from conftest import CORPUS, STUB_CONFIG
from hdlforge.cli import main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_stage_commands_chain(tmp_path, capsys):
    f, u, s, y, r = (tmp_path / d for d in ("f", "u", "s", "y", "r"))
    assert run(["ingest", "--root", CORPUS, "--out", f, "--report", tmp_path / "f.json"], capsys)[0] == 0
    assert json.loads((tmp_path / "f.json").read_text())["output_count"] == 22
    assert run(["dedup", "--in", f, "--out", u, "--report", tmp_path / "groups.json"], capsys)[0] == 0
    groups = json.loads((tmp_path / "groups.json").read_text())
    assert [g["removed"] for g in groups.values()] == [["alu/rtl/vendor/copy/adder8.v"]]
    code, out = run(
        ["syntax", "--in", u, "--out", s, "--backend", "stub", "--stub-verdict", "broken/bad_syntax.v=syntax_error",
         "--failure-log", tmp_path / "fail.jsonl"],
        capsys,
    )
    assert code == 0 and "kept 20/21" in out.out
    code, out = run(
        ["synth", "--in", s, "--out", y, "--backend", "stub", "--stub-fail", "counter/v1/*",
         "--stub-fail", "delayed/delay_line.v", "--project-log", tmp_path / "proj.jsonl"],
        capsys,
    )
    assert code == 0 and (y / "counter" / "v2" / "counter.v").exists()
    assert run(["extract", "--in", y, "--out", r], capsys)[0] == 0
    assert (r / "dec.json").exists()

    db = tmp_path / "m.db"
    assert run(["db", "init", "--db", db], capsys)[0] == 0
    code, out = run(["db", "insert", "--db", db, "--from", r], capsys)
    assert code == 0 and "rejected 2" in out.out
    code, out = run(["db", "query", "--db", db, "--name", "dec"], capsys)
    assert out.out.split("\t")[1] == "dec"
    assert run(["db", "export", "--db", db, "--to", tmp_path / "all.jsonl"], capsys)[0] == 0
    code, out = run(["db", "import", "--db", tmp_path / "copy.db", "--from", tmp_path / "all.jsonl"], capsys)
    assert "rejected 0" in out.out
    assert run(["stats", "--db", db, "--out", tmp_path / "stats"], capsys)[0] == 0
    assert (tmp_path / "stats" / "hist_density.csv").exists()
    code, out = run(["export-pairs", "--db", db, "--preset", "codellama7b", "--out", tmp_path / "p.jsonl"], capsys)
    assert code == 0 and out.out.startswith("wrote ")


def test_run_and_dry_run(tmp_path, capsys):
    code, out = run(["--dry-run", "run", "--config", STUB_CONFIG, "--work", tmp_path / "w"], capsys)
    assert code == 0 and "Filter:" in out.out and not (tmp_path / "w").exists()
    code, out = run(["run", "--config", STUB_CONFIG, "--work", tmp_path / "w", "--report", tmp_path / "r.json"], capsys)
    assert code == 0 and "modules in store: 14" in out.out
    assert len(json.loads((tmp_path / "r.json").read_text())["stages"]) == 5


def test_run_exit_codes(tmp_path, capsys):
    code, out = run(["run", "--config", STUB_CONFIG, "--work", tmp_path / "w", "--only", "lint"], capsys)
    assert code == 2
    bad = tmp_path / "ext.toml"
    bad.write_text(f'[pipeline]\nroot = "{CORPUS}"\n[syntax]\nbackend = "stub"\n[synthesis]\ntool_path = "no-such-yosys"\n')
    code, out = run(["run", "--config", bad, "--work", tmp_path / "w2"], capsys)
    assert code == 1 and "Synthesis" in out.err


def test_structured_logging(tmp_path, capsys):
    log = tmp_path / "log.jsonl"
    run(["--log-level", "info", "--log-file", log, "run", "--config", STUB_CONFIG, "--work", tmp_path / "w"], capsys)
    lines = [json.loads(line) for line in log.read_text().splitlines()]
    assert lines and all({"level", "logger", "msg"} <= set(entry) for entry in lines)


def test_db_url_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FORGE_DB_URL", str(tmp_path / "env.db"))
    assert run(["db", "init"], capsys)[0] == 0
    assert (tmp_path / "env.db").exists()


def test_jobs_must_be_positive(capsys):
    assert run(["--jobs", "0", "db", "init"], capsys)[0] == 2
