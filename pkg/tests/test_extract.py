import pytest

from conftest import DEC_CODE
from hdlforge.describe import (
    DESCRIPTION_PROMPT,
    EndpointConfig,
    ExternalDescriber,
    TemplateDescriber,
    describe_with_fallback,
    enforce_sentence,
)
from hdlforge.errors import ClientUnavailable
from hdlforge.extract import extract_file, extract_project, write_records
from hdlforge.model import PortSpec, SourceFile, deserialize_record


def test_enforce_sentence():
    assert enforce_sentence("Adds numbers") == "Adds numbers."
    long = " ".join(["w"] * 50) + "."
    assert len(enforce_sentence(long).split()) == 40
    assert enforce_sentence(long).endswith(".")


def test_template_description():
    d = TemplateDescriber().describe("dec", [PortSpec("I", "input", 2), PortSpec("y", "output", 4)], DEC_CODE)
    assert d == "Module dec with 1 input and 1 output implementing combinational logic."
    seq = TemplateDescriber().describe("r", [], "module r; always @(posedge c) x <= 1; endmodule")
    assert "sequential" in seq and "no ports" in seq


class FlakyClient:
    kind = "external"

    def describe(self, name, ports, code):
        raise ClientUnavailable("offline")


def test_fallback_after_error():
    text, source = describe_with_fallback(FlakyClient(), "m", [], "module m; endmodule")
    assert source == "fallback-after-error" and text.endswith(".")
    assert describe_with_fallback(None, "m", [], "module m; endmodule")[1] == "fallback"


def test_external_describer_unreachable():
    client = ExternalDescriber(EndpointConfig("http://127.0.0.1:9/v1/chat", timeout=0.5, retries=0))
    with pytest.raises(ClientUnavailable):
        client.describe("m", [], "module m; endmodule")


def test_external_describer_reply_handling(monkeypatch):
    client = ExternalDescriber(EndpointConfig("http://unused"))
    # a short first sentence is kept on its own
    monkeypatch.setattr(client, "_post", lambda prompt: "Adds two words. " + " ".join(["x"] * 45))
    assert client.describe("m", [], "code") == "Adds two words."
    # an overlong first sentence triggers one regeneration, then a hard trim
    replies = iter([" ".join(["long"] * 45) + ".", " ".join(["again"] * 45)])
    monkeypatch.setattr(client, "_post", lambda prompt: next(replies))
    text = client.describe("m", [], "code")
    assert len(text.split()) == 40 and text.startswith("again") and text.endswith(".")
    assert "{verilog_code}" in DESCRIPTION_PROMPT


def test_extract_dec_golden():
    records, rejected = extract_file(SourceFile("dec/dec.v", (DEC_CODE + "\n").encode()))
    assert not rejected
    [r] = records
    assert r.verilog_code == DEC_CODE
    assert r.comments == []
    assert 25 <= r.token_count <= 45


def test_extract_multi_module_and_rejections():
    src = b"module a(input x); endmodule\nmodule b(p, q);\n input p;\nendmodule\n"
    records, rejected = extract_file(SourceFile("p/m.v", src))
    assert [r.module_name for r in records] == ["a"]
    assert rejected[0][0] == "p/m.v::b" and rejected[0][1].startswith("UnparseablePortList")
    assert extract_file(SourceFile("p/e.v", b"wire x;"))[1][0][1].startswith("NoModuleFound")


def test_extract_project_report_and_write(tmp_path):
    files = [
        SourceFile("p/a.v", b"module a(input x); endmodule\n"),
        SourceFile("p/b.v", b"module a(input y); endmodule\n"),
    ]
    records, report = extract_project(files, jobs=2)
    assert report.output_count == 2 and report.input_bytes == report.output_bytes
    paths = write_records(records, tmp_path)
    assert [p.name for p in paths] == ["a.json", "a-1.json"]
    assert deserialize_record(paths[1].read_text()) == records[1]
    assert paths[0].read_text().endswith("}\n")


def test_commented_out_module_yields_nothing():
    code = "module keep(input a); endmodule\n"
    hidden = "/*\nmodule gone(input a, output b); assign b = a; endmodule\n*/\n// module gone2(input a); endmodule\n"
    records, _ = extract_file(SourceFile("p/x.v", (hidden + code).encode()))
    assert [r.module_name for r in records] == ["keep"]
    records, rejected = extract_file(SourceFile("p/y.v", ("/*" + code + "*/").encode()))
    assert records == [] and rejected[0][1].startswith("NoModuleFound")


def test_port_expansion_matches_identifier_scan():
    import re

    code = (
        "module m(a, b, c, d, e);\n input [3:0] a, b;\n input c;\n output reg [7:0] d, e;\nendmodule"
    )
    declared = [
        name.strip()
        for decl in re.findall(r"\b(?:input|output|inout)\b([^;]*);", code)
        for name in re.sub(r"\[[^\]]*\]|\breg\b", "", decl).split(",")
    ]
    [record], _ = extract_file(SourceFile("p/m.v", code.encode()))
    assert [p.name for p in record.ports] == declared


def test_bulk_extraction_success_rate():
    import random

    rnd = random.Random(5)
    styles = [
        "module m{i}(input [{w}:0] a, input b, output [{w}:0] y);\n  assign y = b ? a : 0;\nendmodule\n",
        "module m{i}(a, b, y);\n  input [{w}:0] a;\n  input b;\n  output [{w}:0] y;\n  assign y = a;\nendmodule\n",
        "module m{i} #(parameter W = {w}) (input [W:0] a, output reg [W:0] y);\n  always @(*) y = a;\nendmodule\n",
        "// block {i}\nmodule m{i}(input clk, output reg q);\n  always @(posedge clk) q <= ~q;\nendmodule\n",
    ]
    files = [
        SourceFile(f"p/m{i}.v", rnd.choice(styles).format(i=i, w=rnd.randint(0, 31)).encode()) for i in range(1000)
    ]
    records, report = extract_project(files, jobs=4)
    assert report.output_count / report.input_count >= 0.99
    assert [r.module_name for r in records] == [f"m{i}" for i in sorted(range(1000), key=lambda i: f"p/m{i}.v")]
