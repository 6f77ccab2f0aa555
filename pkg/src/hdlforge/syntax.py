"""Per-file syntax checking through an external compiler, with diagnostic triage.

Classification only looks at (exit code, stderr), so captured transcripts
can be replayed without the tool installed.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import ConfigError, ToolFailure
from .model import SourceFile, Stage, StageReport

log = logging.getLogger(__name__)

MACRO_WARNING = "warning: macro"


class SyntaxVerdict(str, Enum):
    PASS = "Pass"
    PASS_WITH_WARNINGS = "PassWithWarnings"
    PASS_WITH_ELABORATION_ISSUES = "PassWithElaborationIssues"
    SYNTAX_ERROR = "SyntaxError"
    TOOL_FAILURE = "ToolFailure"

    @property
    def passed(self) -> bool:
        return self in (
            SyntaxVerdict.PASS,
            SyntaxVerdict.PASS_WITH_WARNINGS,
            SyntaxVerdict.PASS_WITH_ELABORATION_ISSUES,
        )


@dataclass
class SyntaxOutcome:
    verdict: SyntaxVerdict
    messages: list[str] = field(default_factory=list)


@dataclass
class Transcript:
    returncode: int
    stdout: str = ""
    stderr: str = ""


@dataclass
class DiagnosticPatterns:
    """Backend-specific regexes; the defaults target Icarus Verilog."""

    syntax: list[str] = field(
        default_factory=lambda: [
            r"syntax error",
            r"I give up",
            r"error: [Ii]nvalid module (?:item|instantiation)",
            r"error: malformed",
        ]
    )
    elaboration: list[str] = field(
        default_factory=lambda: [
            r"Unknown module type",
            r"Unable to bind",
            r"[Ii]nclude file .* not found",
            r"(?:module|file) .*not found",
            r"error\(s\) during elaboration",
            r"Elaboration failed",
        ]
    )

    def __post_init__(self) -> None:
        try:
            self._syntax = [re.compile(p) for p in self.syntax]
            self._elab = [re.compile(p) for p in self.elaboration]
        except re.error as exc:
            raise ConfigError(f"bad diagnostic pattern: {exc}") from exc

    def is_syntax(self, line: str) -> bool:
        return any(p.search(line) for p in self._syntax)

    def is_elaboration(self, line: str) -> bool:
        return MACRO_WARNING in line or any(p.search(line) for p in self._elab)


def classify(returncode: int, stderr: str, patterns: Optional[DiagnosticPatterns] = None) -> SyntaxOutcome:
    """Verdict for one compiler run.

    A clean exit passes (with warnings when stderr is non-empty). On a
    non-zero exit, elaboration-class lines (including macro warnings) win
    over syntax errors: elaboration is left for the synthesis gate.
    """
    patterns = patterns or DiagnosticPatterns()
    text = stderr.strip()
    lines = [line for line in text.splitlines() if line.strip()]
    if returncode == 0:
        if text:
            return SyntaxOutcome(SyntaxVerdict.PASS_WITH_WARNINGS, lines)
        return SyntaxOutcome(SyntaxVerdict.PASS)
    has_syntax = False
    elaboration = []
    for line in lines:
        if patterns.is_syntax(line):
            has_syntax = True
        elif patterns.is_elaboration(line):
            elaboration.append(line)
    if has_syntax and not elaboration:
        return SyntaxOutcome(SyntaxVerdict.SYNTAX_ERROR, lines or ["Unknown syntax error"])
    if elaboration:
        return SyntaxOutcome(SyntaxVerdict.PASS_WITH_ELABORATION_ISSUES, elaboration)
    return SyntaxOutcome(SyntaxVerdict.SYNTAX_ERROR, lines or ["Unknown error"])


# ---------------------------------------------------------------- backends

@dataclass
class ExternalCompiler:
    """Runs a compiler binary; ``{file}`` in the template is the source path."""

    tool_path: str = "iverilog"
    args: Sequence[str] = ("-o", os.devnull, "-Wall", "{file}")
    timeout: float = 30.0
    base_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if "{file}" not in self.args:
            raise ConfigError("argument template needs a {file} placeholder")
        if "-o" not in self.args:
            raise ConfigError("argument template must discard object output with -o")

    def resolve(self) -> str:
        found = shutil.which(self.tool_path)
        if not found:
            raise ToolFailure(f"compiler not found: {self.tool_path}")
        return found

    def run(self, file: SourceFile) -> Transcript:
        tool = self.resolve()
        on_disk = Path(self.base_dir, file.path) if self.base_dir else None
        with tempfile.TemporaryDirectory(prefix="forge-syntax-") as tmp:
            if on_disk is None or not on_disk.is_file():
                on_disk = Path(tmp, file.name)
                on_disk.write_bytes(file.content)
            cmd = [tool] + [a.replace("{file}", str(on_disk)) for a in self.args]
            try:
                result = subprocess.run(
                    cmd, capture_output=True, text=True, errors="replace", timeout=self.timeout
                )
            except subprocess.TimeoutExpired as exc:
                raise ToolFailure(f"timed out after {self.timeout}s") from exc
            except OSError as exc:
                raise ToolFailure(f"could not run {tool}: {exc}") from exc
        return Transcript(result.returncode, result.stdout, result.stderr)


# canned transcripts for the stub backend; {path} is filled in per file
CANNED = {
    "pass": Transcript(0),
    "warning": Transcript(0, stderr="{path}:1: warning: implicit definition of wire 'x'."),
    "syntax_error": Transcript(1, stderr="{path}:2: syntax error\nI give up."),
    "elaboration": Transcript(
        2, stderr="{path}:4: error: Unknown module type: missing_block\n2 error(s) during elaboration."
    ),
    "macro": Transcript(1, stderr="{path}:3: warning: macro WIDTH undefined (and assumed null) at this point."),
}


@dataclass
class StubCompiler:
    """Deterministic backend: file-path globs map to canned outcomes.

    The first matching glob wins; unmatched files get ``default``. The
    outcome ``tool_failure`` raises ToolFailure.
    """

    verdicts: dict[str, str] = field(default_factory=dict)
    default: str = "pass"

    def __post_init__(self) -> None:
        for outcome in list(self.verdicts.values()) + [self.default]:
            if outcome not in CANNED and outcome != "tool_failure":
                raise ConfigError(f"unknown stub outcome {outcome!r}")

    def outcome_for(self, path: str) -> str:
        for pattern, outcome in self.verdicts.items():
            if fnmatch.fnmatch(path, pattern) or fnmatch.fnmatch(path.rsplit("/", 1)[-1], pattern):
                return outcome
        return self.default

    def run(self, file: SourceFile) -> Transcript:
        outcome = self.outcome_for(file.path)
        if outcome == "tool_failure":
            raise ToolFailure("stub tool failure")
        canned = CANNED[outcome]
        return Transcript(canned.returncode, canned.stdout, canned.stderr.replace("{path}", file.path))


Backend = Union[ExternalCompiler, StubCompiler]


def check_syntax(
    file: SourceFile, backend: Backend, patterns: Optional[DiagnosticPatterns] = None
) -> SyntaxOutcome:
    try:
        transcript = backend.run(file)
    except ToolFailure as exc:
        return SyntaxOutcome(SyntaxVerdict.TOOL_FAILURE, [str(exc)])
    return classify(transcript.returncode, transcript.stderr, patterns)


def run_syntax_stage(
    files: Sequence[SourceFile],
    backend: Backend,
    patterns: Optional[DiagnosticPatterns] = None,
    jobs: int = 1,
) -> tuple[list[SourceFile], StageReport, dict[str, SyntaxOutcome]]:
    """Check every file; passing verdicts (elaboration issues included) are kept."""
    ordered = sorted(files, key=lambda f: f.path)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(lambda f: check_syntax(f, backend, patterns), ordered))
    report = StageReport(
        Stage.SYNTAX, input_count=len(ordered), input_bytes=sum(f.size for f in ordered)
    )
    passed = []
    for f, outcome in zip(ordered, outcomes):
        if outcome.verdict.passed:
            passed.append(f)
            report.output_count += 1
            report.output_bytes += f.size
            if outcome.verdict is not SyntaxVerdict.PASS:
                report.flags.append((f.path, outcome.verdict.value))
        else:
            first = outcome.messages[0] if outcome.messages else ""
            report.reject(f.path, f"{outcome.verdict.value}: {first}")
            log.info("syntax reject %s: %s", f.path, outcome.verdict.value)
    return passed, report, dict(zip((f.path for f in ordered), outcomes))


def write_failure_log(outcomes: dict[str, SyntaxOutcome], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in sorted(outcomes):
            o = outcomes[p]
            if not o.verdict.passed:
                fh.write(json.dumps({"path": p, "verdict": o.verdict.value, "messages": o.messages}) + "\n")
