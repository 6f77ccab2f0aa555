"""Walk local project trees and drop netlists, testbenches and simulation files."""

from __future__ import annotations

import fnmatch
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .lexical import mask
from .model import ProjectUnit, SourceFile, Stage, StageReport
from .verilog import module_names

log = logging.getLogger(__name__)

VERILOG_SUFFIX = ".v"
# content markers that only raise a flag when they are the sole match
SOFT_CONTENT_MARKERS = ("initial",)


@dataclass
class FilterConfig:
    suffix_excludes: list[str] = field(
        default_factory=lambda: ["_netlist.v", "_gate.v", "_mapped.v", "_synth.v"]
    )
    path_excludes: list[str] = field(
        default_factory=lambda: ["sim", "simulate", "waveform", "_test"]
    )
    testbench_markers: list[str] = field(default_factory=lambda: ["tb", "TB"])
    content_excludes: list[str] = field(
        default_factory=lambda: ["$display", "initial", "waveform.vcd", "dumpfile"]
    )
    # project-name glob -> origin label
    origins: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: dict) -> "FilterConfig":
        known = {"suffix_excludes", "path_excludes", "testbench_markers", "content_excludes", "origins"}
        unknown = set(data) - known
        if unknown:
            from .errors import ConfigError

            raise ConfigError(f"unknown filter keys: {sorted(unknown)}")
        return cls(**{k: (dict(v) if k == "origins" else list(v)) for k, v in data.items()})


@dataclass(frozen=True)
class Keep:
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Reject:
    reason: str


Verdict = Union[Keep, Reject]


def _is_word(c: str, path_mode: bool) -> bool:
    return c.isalnum() if path_mode else (c.isalnum() or c == "_")


def contains_token(text: str, keyword: str, path_mode: bool) -> bool:
    """Substring search that respects token boundaries.

    A boundary is needed on a side only where the keyword itself starts or
    ends with a word character, so ``_test`` matches ``fifo_test`` and
    ``dumpfile`` matches ``$dumpfile``. Path mode is case-insensitive,
    treats ``_`` as a separator, accepts a lower-to-upper case change as a
    boundary (``aluTB``) and a trailing digit (``alu_tb2``). Content mode
    is case-sensitive and treats ``_`` as part of identifiers.
    """
    if not keyword:
        return False
    flags = re.IGNORECASE if path_mode else 0
    need_left = _is_word(keyword[0], path_mode)
    need_right = _is_word(keyword[-1], path_mode)
    for m in re.finditer(re.escape(keyword), text, flags):
        s, e = m.start(), m.end()
        left_ok = (
            not need_left
            or s == 0
            or not _is_word(text[s - 1], path_mode)
            or (path_mode and text[s - 1].islower() and text[s].isupper())
        )
        right_ok = (
            not need_right
            or e == len(text)
            or not _is_word(text[e], path_mode)
            or (path_mode and (text[e].isdigit() or (text[e - 1].islower() and text[e].isupper())))
        )
        if left_ok and right_ok:
            return True
    return False


def _segment_matches(segment: str, keyword: str) -> bool:
    return contains_token(segment, keyword, True)


def filter_file(file: SourceFile, config: FilterConfig) -> Verdict:
    name = file.name.lower()
    for suffix in config.suffix_excludes:
        if name.endswith(suffix.lower()):
            return Reject(f"suffix {suffix}")
    segments = file.path.split("/")
    for keyword in config.path_excludes:
        if any(_segment_matches(seg, keyword) for seg in segments):
            return Reject(f"path keyword {keyword}")
    for marker in config.testbench_markers:
        if any(_segment_matches(seg, marker) for seg in segments):
            return Reject(f"testbench marker {marker}")

    text = file.text
    live = mask(text, comments=True, strings=False)
    for marker in config.testbench_markers:
        for mod in module_names(text):
            if contains_token(mod, marker, True):
                return Reject(f"testbench module {mod}")
    soft = []
    for keyword in config.content_excludes:
        if contains_token(live, keyword, False):
            if keyword in SOFT_CONTENT_MARKERS:
                soft.append(f"content {keyword}")
                continue
            return Reject(f"content {keyword}")
    return Keep(tuple(soft))


def _origin_for(project: str, config: FilterConfig) -> str:
    for pattern, origin in config.origins.items():
        if fnmatch.fnmatch(project, pattern):
            return origin
    return "Other"


def _project_notes(project_dir: Path) -> Optional[str]:
    names = {p.name.lower() for p in project_dir.iterdir() if p.is_file()}
    notes = []
    if any(n.startswith("license") or n.startswith("copying") for n in names):
        notes.append("license")
    if any(n.startswith("readme") for n in names):
        notes.append("readme")
    return ",".join(notes) or None


def _walk_verilog(directory: Path) -> list[Path]:
    found = []
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames.sort()
        for fn in filenames:
            if fn.lower().endswith(VERILOG_SUFFIX):
                found.append(Path(dirpath) / fn)
    return found


def scan_projects(
    root: Union[str, os.PathLike], config: Optional[FilterConfig] = None
) -> tuple[list[ProjectUnit], StageReport]:
    """One ProjectUnit per immediate child directory of ``root``.

    Paths in the result are relative to ``root`` and use ``/``.
    """
    config = config or FilterConfig()
    root = Path(root)
    report = StageReport(Stage.FILTER)
    projects: list[ProjectUnit] = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if not entry.is_dir():
            if entry.name.lower().endswith(VERILOG_SUFFIX):
                size = entry.stat().st_size
                report.input_count += 1
                report.input_bytes += size
                report.reject(entry.name, "outside any project directory")
            continue
        origin = _origin_for(entry.name, config)
        kept: list[SourceFile] = []
        for path in sorted(_walk_verilog(entry), key=lambda p: p.relative_to(root).as_posix()):
            rel = path.relative_to(root).as_posix()
            report.input_count += 1
            try:
                content = path.read_bytes()
            except OSError as exc:
                report.reject(rel, f"IoError: {exc.strerror or exc}")
                continue
            report.input_bytes += len(content)
            source = SourceFile(rel, content, origin=origin, project_id=entry.name)
            verdict = filter_file(source, config)
            if isinstance(verdict, Reject):
                report.reject(rel, verdict.reason)
                log.debug("filter reject %s: %s", rel, verdict.reason)
                continue
            for flag in verdict.flags:
                report.flags.append((rel, flag))
            kept.append(source)
            report.output_count += 1
            report.output_bytes += len(content)
        if kept:
            projects.append(
                ProjectUnit(entry.name, entry.name, kept, origin=origin, notes=_project_notes(entry))
            )
    return projects, report


def load_tree(root: Union[str, os.PathLike]) -> list[SourceFile]:
    """All ``.v`` files under ``root`` with project ids from the first path segment."""
    root = Path(root)
    files = []
    for path in sorted(_walk_verilog(root), key=lambda p: p.relative_to(root).as_posix()):
        rel = path.relative_to(root).as_posix()
        project = rel.split("/", 1)[0] if "/" in rel else ""
        files.append(SourceFile(rel, path.read_bytes(), project_id=project))
    return files


def group_projects(files: list[SourceFile]) -> list[ProjectUnit]:
    """Group files by their top-level directory; loose files share project ``""``."""
    by_project: dict[str, list[SourceFile]] = {}
    for f in files:
        pid = f.path.split("/", 1)[0] if "/" in f.path else ""
        by_project.setdefault(pid, []).append(f)
    return [
        ProjectUnit(pid, pid or ".", sorted(by_project[pid], key=lambda f: f.path))
        for pid in sorted(by_project)
    ]


def write_files(files: list[SourceFile], out_dir: Union[str, os.PathLike]) -> None:
    out = Path(out_dir)
    for f in files:
        target = out / f.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(f.content)
