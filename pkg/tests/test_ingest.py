import os

import pytest

from conftest import CORPUS
from hdlforge.errors import ConfigError
from hdlforge.ingest import (
    FilterConfig,
    Keep,
    Reject,
    contains_token,
    filter_file,
    group_projects,
    load_tree,
    scan_projects,
)
from hdlforge.model import SourceFile

CFG = FilterConfig()


def verdict(path, text="module m(input a); endmodule\n"):
    return filter_file(SourceFile(path, text.encode()), CFG)


@pytest.mark.parametrize(
    "path, reason",
    [
        ("p/core_netlist.v", "suffix _netlist.v"),
        ("p/CORE_GATE.V", "suffix _gate.v"),
        ("p/sim/core.v", "path keyword sim"),
        ("p/simulate/core.v", "path keyword simulate"),
        ("p/fifo_test.v", "path keyword _test"),
        ("p/waveform/core.v", "path keyword waveform"),
        ("p/tb/core.v", "testbench marker tb"),
        ("p/alu_tb.v", "testbench marker tb"),
        ("p/aluTB.v", "testbench marker tb"),
        ("p/tb_alu2.v", "testbench marker tb"),
    ],
)
def test_path_rules(path, reason):
    assert verdict(path) == Reject(reason)


@pytest.mark.parametrize("path", ["p/simd_unit.v", "p/usb_ctrl.v", "p/testing/core.v", "p/stb_gen.v", "p/similar.v"])
def test_path_rules_respect_token_boundaries(path):
    assert verdict(path) == Keep()


def test_testbench_module_name():
    assert verdict("p/x.v", "module alu_tb; endmodule") == Reject("testbench module alu_tb")


def test_content_rules_ignore_comments():
    assert verdict("p/x.v", 'module m; always $display("x"); endmodule') == Reject("content $display")
    assert verdict("p/x.v", "// $display\nmodule m(input a); /* dumpfile */ endmodule") == Keep()
    assert verdict("p/x.v", 'module m; always $dumpfile("w.vcd"); endmodule') == Reject("content dumpfile")


def test_initial_is_a_soft_flag():
    v = verdict("p/x.v", "module m(input a); reg r; initial r = 0; endmodule")
    assert v == Keep(("content initial",))
    assert verdict("p/x.v", "module m(input initial_value); endmodule") == Keep()


def test_contains_token_modes():
    assert contains_token("$dumpfile(x)", "dumpfile", path_mode=False)
    assert not contains_token("initial_value", "initial", path_mode=False)
    assert contains_token("alu_TB", "tb", path_mode=True)
    assert not contains_token("stb", "tb", path_mode=True)


def test_filter_config_from_mapping():
    cfg = FilterConfig.from_mapping({"path_excludes": ["bench"]})
    assert cfg.path_excludes == ["bench"]
    assert cfg.suffix_excludes == FilterConfig().suffix_excludes
    with pytest.raises(ConfigError):
        FilterConfig.from_mapping({"bogus": []})


def test_scan_projects_on_fixture():
    projects, report = scan_projects(CORPUS)
    kept = sorted(f.path for p in projects for f in p.files)
    rejected = dict(report.rejections)
    assert report.input_count == 30
    assert len(kept) == 22
    assert rejected["loose.v"] == "outside any project directory"
    assert rejected["mem/dump.v"] == "content dumpfile"
    assert "mem/fifo.v" in kept
    assert ("mem/ram.v", "content initial") in report.flags
    assert report.output_bytes == sum(f.size for p in projects for f in p.files)
    assert [p.project_id for p in projects] == sorted(p.project_id for p in projects)


def test_scan_projects_origins_and_unreadable(tmp_path):
    (tmp_path / "oc_uart").mkdir()
    (tmp_path / "oc_uart" / "a.v").write_text("module a(input x); endmodule")
    locked = tmp_path / "oc_uart" / "b.v"
    locked.write_text("module b(input x); endmodule")
    locked.chmod(0)
    try:
        cfg = FilterConfig(origins={"oc_*": "OpenCores"})
        projects, report = scan_projects(tmp_path, cfg)
        assert projects[0].origin == "OpenCores"
        if os.geteuid() != 0:
            assert report.rejections[0][1].startswith("IoError")
    finally:
        locked.chmod(0o644)


def test_group_projects_by_first_segment():
    files = load_tree(CORPUS / "alu")
    groups = group_projects(files)
    assert [g.project_id for g in groups] == ["", "rtl", "sim"]
