"""Prompt/response instruction pairs built from stored module records."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Sequence, Union

from .model import ModuleRecord, PortSpec

SYSTEM_PROMPT = (
    "You are a highly experienced RTL code designer skilled at designing concise, "
    "syntactically correct, and synthesizable Verilog code that functions."
)
GENERATE_LINE = "Generate Verilog code for a module named {name} with the following ports and description:"
NO_PORTS = "(no ports)"

# context-window presets, in tokens
PRESETS = {"mistral7b": 8192, "codellama7b": 4096}


@dataclass(frozen=True)
class InstructionPair:
    prompt: str
    response: str
    source_id: int
    token_count: int


def render_port(port: PortSpec) -> str:
    if isinstance(port.bit_width, int):
        if port.bit_width > 1:
            return f"{port.direction} [{port.bit_width - 1}:0] {port.name}"
        return f"{port.direction} {port.name}"
    return f"{port.direction} {port.bit_width.expression} {port.name}"


def port_line(ports: Sequence[PortSpec]) -> str:
    return ", ".join(render_port(p) for p in ports) if ports else NO_PORTS


def format_pair(record: ModuleRecord, source_id: int = 0) -> InstructionPair:
    prompt = "\n\n".join(
        [
            SYSTEM_PROMPT,
            GENERATE_LINE.format(name=record.module_name),
            port_line(record.ports),
            record.description,
        ]
    )
    return InstructionPair(prompt, record.verilog_code, source_id, record.token_count)


def parse_budget(value: Union[str, int, float, None]) -> float:
    """Budget from a number, a preset name, or ``inf``."""
    if value is None:
        return math.inf
    if isinstance(value, (int, float)):
        return value
    text = str(value).strip().lower()
    if text in PRESETS:
        return PRESETS[text]
    if text in ("inf", "infinity", "none", "unlimited"):
        return math.inf
    return int(text)


def export_pairs(store, budget: float, out_path: Union[str, os.PathLike]) -> tuple[int, int]:
    """Write pairs whose code token count fits ``budget``; returns (emitted, skipped).

    Only the response code counts against the budget, not the prompt.
    """
    emitted = skipped = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for source_id, record in store.query_modules():
            if record.token_count > budget:
                skipped += 1
                continue
            pair = format_pair(record, source_id)
            fh.write(json.dumps(asdict(pair), ensure_ascii=False) + "\n")
            emitted += 1
    return emitted, skipped
