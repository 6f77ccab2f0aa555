import json

from hdlforge.instruct import PRESETS, export_pairs, format_pair, parse_budget, port_line
from hdlforge.model import ModuleRecord, PortSpec, Unresolved
from hdlforge.store import ModuleStore

ADD_DESCRIPTION = (
    "This module performs combinational addition, computing the sum of two 16-bit inputs to produce a 16-bit output."
)


def add_record(tokens=20):
    return ModuleRecord(
        "ADD",
        [PortSpec("in1", "input", 16), PortSpec("in2", "input", 16), PortSpec("out", "output", 16)],
        [],
        "module ADD(input [15:0] in1, input [15:0] in2, output [15:0] out);\n assign out = in1 + in2;\nendmodule",
        tokens,
        ADD_DESCRIPTION,
    )


def test_port_line():
    assert port_line(add_record().ports) == "input [15:0] in1, input [15:0] in2, output [15:0] out"
    assert port_line([PortSpec("clk", "input", 1)]) == "input clk"
    assert port_line([]) == "(no ports)"
    assert port_line([PortSpec("d", "input", Unresolved("[W-1:0]"))]) == "input [W-1:0] d"


def test_pair_sections():
    pair = format_pair(add_record(), 7)
    parts = pair.prompt.split("\n\n")
    assert parts[1] == "Generate Verilog code for a module named ADD with the following ports and description:"
    assert parts[3] == ADD_DESCRIPTION
    assert pair.response == add_record().verilog_code and pair.source_id == 7


def test_budget_parsing():
    assert parse_budget("codellama7b") == PRESETS["codellama7b"] == 4096
    assert parse_budget("8192") == 8192
    assert parse_budget("inf") == float("inf")


def test_export_respects_budget(tmp_path):
    store = ModuleStore(str(tmp_path / "s.db"))
    store.init_schema()
    store.insert_record(add_record(100))
    small = add_record(10)
    small.verilog_code += "\n// variant"
    store.insert_record(small)
    out = tmp_path / "pairs.jsonl"
    assert export_pairs(store, 50, out) == (1, 1)
    [row] = [json.loads(line) for line in out.read_text().splitlines()]
    assert set(row) == {"prompt", "response", "source_id", "token_count"}
    assert row["source_id"] == 2 and row["token_count"] == 10
