import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
STUB_CONFIG = FIXTURES / "stub.toml"

DEC_CODE = (
    "module dec (\n input [1:0] I,\n input v,\n output reg [3:0] y\n);\n\n always@(I)\n begin\n"
    " case({I,v})\n 3'b001: y = 4'b0001;\n 3'b011: y = 4'b0010;\n 3'b101: y = 4'b0100;\n"
    " 3'b111: y = 4'b1000;\n default: y=4'b0000;\n endcase\n end\nendmodule"
)


@pytest.fixture
def corpus_copy(tmp_path):
    dst = tmp_path / "corpus"
    shutil.copytree(CORPUS, dst)
    return dst
