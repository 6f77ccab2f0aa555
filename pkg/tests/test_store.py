import json
import threading

import pytest

from hdlforge.errors import StoreUnavailable
from hdlforge.model import ModuleRecord, PortSpec, Unresolved
from hdlforge.store import Inserted, ModuleQuery, ModuleStore, Rejected, resolve_url, validation_reason


def rec(name="inv", code=None, ports=None, comments=(), tokens=5):
    return ModuleRecord(
        module_name=name,
        ports=[PortSpec("a", "input", 1), PortSpec("y", "output", 4)] if ports is None else ports,
        comments=list(comments),
        verilog_code=code or f"module {name}(input a, output [3:0] y); endmodule",
        token_count=tokens,
        description=f"Module {name} does things.",
    )


@pytest.fixture
def store(tmp_path):
    s = ModuleStore(str(tmp_path / "db.sqlite"))
    s.init_schema()
    yield s
    s.close()


def test_insert_and_query_round_trip(store):
    r = rec(comments=["one", "two"])
    assert store.insert_record(r) == Inserted(1)
    [(module_id, back)] = store.query_modules()
    assert module_id == 1 and back == r
    assert store.count() == (1, 2)


def test_validation_gates(store):
    assert store.insert_record(rec(ports=[PortSpec("d", "input", Unresolved("[W:0]"))])) == Rejected(
        "unresolved width: d"
    )
    assert store.insert_record(rec(name="logic", ports=[])) == Rejected("no ports captured")
    assert isinstance(store.insert_record(rec(name="filler_x", ports=[])), Inserted)
    assert store.count() == (1, 0)


def test_duplicate_code_leaves_no_partial_rows(store):
    assert isinstance(store.insert_record(rec()), Inserted)
    assert store.insert_record(rec(name="other", code=rec().verilog_code)) == Rejected("duplicate verilog_code")
    assert store.count() == (1, 2)


def test_duplicate_port_names():
    r = rec(ports=[PortSpec("a", "input", 1), PortSpec("a", "output", 1)])
    assert validation_reason(r) == "duplicate port names"


def test_cascade_delete(store):
    store.insert_record(rec())
    store.delete_module(1)
    assert store.count() == (0, 0)


def test_queries(store):
    store.insert_record(rec("alpha", tokens=10, comments=["c"]))
    store.insert_record(rec("beta", tokens=100))
    store.insert_record(rec("gamma", tokens=50, ports=[PortSpec("a", "input", 1)]))
    names = lambda q: [r.module_name for _, r in store.query_modules(q)]
    assert names(ModuleQuery(name_pattern="et")) == ["beta"]
    assert names(ModuleQuery(min_tokens=20, max_tokens=60)) == ["gamma"]
    assert names(ModuleQuery(max_ports=1)) == ["gamma"]
    assert names(ModuleQuery(has_comments=True)) == ["alpha"]
    assert names(ModuleQuery(has_comments=False)) == ["beta", "gamma"]


def test_jsonl_export_import(store, tmp_path):
    store.insert_record(rec("a"))
    store.insert_record(rec("b"))
    path = tmp_path / "out.jsonl"
    assert store.export_jsonl(path) == 2
    with open(path, "a") as fh:
        fh.write("{broken\n")
        fh.write(json.dumps({"module_name": "x"}) + "\n")
    other = ModuleStore(str(tmp_path / "other.sqlite"))
    other.init_schema()
    assert other.import_jsonl(path) == (2, 2)
    assert [r for _, r in other.query_modules()] == [r for _, r in store.query_modules()]
    # importing again hits the uniqueness constraint on every line
    assert other.import_jsonl(path) == (0, 4)


def test_concurrent_duplicates_admit_one(tmp_path):
    url = str(tmp_path / "race.sqlite")
    ModuleStore(url).init_schema()
    results = []

    def worker():
        s = ModuleStore(url)
        results.append(s.insert_record(rec()))
        s.close()

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sum(isinstance(r, Inserted) for r in results) == 1
    assert ModuleStore(url).count() == (1, 2)


def test_url_resolution(monkeypatch, tmp_path):
    monkeypatch.delenv("FORGE_DB_URL", raising=False)
    with pytest.raises(StoreUnavailable):
        resolve_url(None)
    monkeypatch.setenv("FORGE_DB_URL", str(tmp_path / "e.db"))
    assert resolve_url(None) == f"sqlite:///{tmp_path / 'e.db'}"
    assert resolve_url("postgresql://h/db") == "postgresql://h/db"


def test_unreachable_store(tmp_path):
    with pytest.raises(StoreUnavailable):
        ModuleStore(str(tmp_path / "missing" / "dir" / "x.db")).init_schema()
