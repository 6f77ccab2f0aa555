import json
import shutil

import pytest

from hdlforge.errors import ConfigError
from hdlforge.model import SourceFile
from hdlforge.syntax import (
    DiagnosticPatterns,
    ExternalCompiler,
    StubCompiler,
    SyntaxVerdict,
    check_syntax,
    classify,
    run_syntax_stage,
    write_failure_log,
)

V = SyntaxVerdict


def test_clean_exit():
    assert classify(0, "").verdict is V.PASS
    assert classify(0, "x.v:3: warning: implicit net").verdict is V.PASS_WITH_WARNINGS


def test_syntax_error():
    out = classify(1, "x.v:2: syntax error\nI give up.")
    assert out.verdict is V.SYNTAX_ERROR
    assert out.messages[0] == "x.v:2: syntax error"


def test_elaboration_is_tolerated():
    out = classify(2, "x.v:4: error: Unknown module type: foo\n2 error(s) during elaboration.")
    assert out.verdict is V.PASS_WITH_ELABORATION_ISSUES
    assert out.verdict.passed


def test_macro_warning_goes_to_elaboration():
    out = classify(1, "x.v:3: warning: macro WIDTH undefined (and assumed null) at this point.")
    assert out.verdict is V.PASS_WITH_ELABORATION_ISSUES


def test_unknown_nonzero_exit():
    out = classify(3, "")
    assert out.verdict is V.SYNTAX_ERROR and out.messages == ["Unknown error"]


def test_custom_patterns_and_bad_regex():
    pats = DiagnosticPatterns(syntax=["parse failure"], elaboration=["cannot find"])
    assert classify(1, "parse failure at 3", pats).verdict is V.SYNTAX_ERROR
    with pytest.raises(ConfigError):
        DiagnosticPatterns(syntax=["("])


def test_external_compiler_requires_placeholders():
    with pytest.raises(ConfigError):
        ExternalCompiler(args=("-o", "/dev/null"))
    with pytest.raises(ConfigError):
        ExternalCompiler(args=("{file}",))


def test_missing_tool_is_tool_failure():
    backend = ExternalCompiler(tool_path="no-such-compiler-here")
    out = check_syntax(SourceFile("a.v", b"module a; endmodule"), backend)
    assert out.verdict is V.TOOL_FAILURE and not out.verdict.passed


def test_stub_outcomes_and_stage(tmp_path):
    stub = StubCompiler({"*bad*": "syntax_error", "p/elab.v": "elaboration", "p/tf.v": "tool_failure"})
    files = [
        SourceFile("p/bad.v", b"module"),
        SourceFile("p/elab.v", b"module e; endmodule"),
        SourceFile("p/ok.v", b"module o; endmodule"),
        SourceFile("p/tf.v", b"module t; endmodule"),
    ]
    passed, report, outcomes = run_syntax_stage(files, stub, jobs=2)
    assert [f.path for f in passed] == ["p/elab.v", "p/ok.v"]
    assert report.flags == [("p/elab.v", "PassWithElaborationIssues")]
    assert {p for p, _ in report.rejections} == {"p/bad.v", "p/tf.v"}
    log = tmp_path / "fail.jsonl"
    write_failure_log(outcomes, log)
    rows = [json.loads(line) for line in log.read_text().splitlines()]
    assert [r["verdict"] for r in rows] == ["SyntaxError", "ToolFailure"]


def test_stub_rejects_unknown_outcome():
    with pytest.raises(ConfigError):
        StubCompiler({"*": "explode"})


@pytest.mark.skipif(shutil.which("iverilog") is None, reason="iverilog not installed")
def test_real_compiler_on_syntax_error(tmp_path):
    out = check_syntax(SourceFile("bad.v", b"module bad(input a, output b)\n assign b = a\nendmodule\n"), ExternalCompiler())
    assert out.verdict is V.SYNTAX_ERROR
