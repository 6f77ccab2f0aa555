"""Shared domain types and the canonical module-record JSON format."""

from __future__ import annotations

import json
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

from .errors import InvariantViolation, MalformedJson, MissingField

ORIGINS = ("GitHub", "OpenCores", "Academic")
DIRECTIONS = ("input", "output", "inout")
RECORD_KEYS = ("module_name", "ports", "comments", "verilog_code", "token_count", "description")
PORT_KEYS = ("name", "direction", "bit_width")
MAX_DESCRIPTION_WORDS = 40


def normalize_path(path: str) -> str:
    path = path.replace("\\", "/")
    path = posixpath.normpath(path)
    if path in ("", "."):
        raise InvariantViolation("empty path")
    return path


@dataclass(frozen=True)
class SourceFile:
    path: str
    content: bytes
    origin: str = "Other"
    project_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", normalize_path(self.path))

    @property
    def text(self) -> str:
        return self.content.decode("utf-8", errors="replace")

    @property
    def size(self) -> int:
        return len(self.content)

    @property
    def name(self) -> str:
        return posixpath.basename(self.path)


@dataclass
class ProjectUnit:
    project_id: str
    root: str
    files: list[SourceFile]
    origin: str = "Other"
    notes: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.files:
            raise InvariantViolation(f"project {self.project_id} has no files")
        if self.root in ("", "."):
            return
        prefix = normalize_path(self.root).rstrip("/") + "/"
        for f in self.files:
            if not f.path.startswith(prefix):
                raise InvariantViolation(f"{f.path} is not under {self.root}")

    @property
    def size(self) -> int:
        return sum(f.size for f in self.files)


@dataclass(frozen=True)
class Unresolved:
    """A port width whose range expression could not be evaluated."""

    expression: str

    def __str__(self) -> str:
        return self.expression


Width = Union[int, Unresolved]


@dataclass(frozen=True)
class PortSpec:
    name: str
    direction: str
    bit_width: Width = 1

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise InvariantViolation(f"illegal port direction {self.direction!r}")
        if not self.name:
            raise InvariantViolation("port name is empty")
        if isinstance(self.bit_width, bool) or (
            isinstance(self.bit_width, int) and self.bit_width < 1
        ):
            raise InvariantViolation(f"port {self.name}: bit width must be >= 1")

    @property
    def resolved(self) -> bool:
        return isinstance(self.bit_width, int)


@dataclass
class ModuleRecord:
    module_name: str
    ports: list[PortSpec]
    comments: list[str]
    verilog_code: str
    token_count: int
    description: str
    # not serialized: where the description came from ("external", "fallback", ...)
    description_source: str = field(default="unknown", compare=False, repr=False)

    def validate(self) -> None:
        if not self.module_name:
            raise InvariantViolation("module_name is empty")
        if not isinstance(self.token_count, int) or isinstance(self.token_count, bool) or self.token_count < 0:
            raise InvariantViolation("token_count must be a non-negative integer")
        if not isinstance(self.description, str) or not self.description.strip():
            raise InvariantViolation("description is empty")
        if not self.description.endswith("."):
            raise InvariantViolation("description must end with a period")
        if len(self.description.split()) > MAX_DESCRIPTION_WORDS:
            raise InvariantViolation(f"description exceeds {MAX_DESCRIPTION_WORDS} words")


class Stage(str, Enum):
    FILTER = "Filter"
    DEDUP = "Dedup"
    SYNTAX = "Syntax"
    SYNTHESIS = "Synthesis"
    DB_VALIDATION = "DbValidation"


STAGE_ORDER = (Stage.FILTER, Stage.DEDUP, Stage.SYNTAX, Stage.SYNTHESIS, Stage.DB_VALIDATION)


@dataclass
class StageReport:
    stage: Stage
    input_count: int = 0
    output_count: int = 0
    input_bytes: int = 0
    output_bytes: int = 0
    rejections: list[tuple[str, str]] = field(default_factory=list)
    # soft findings that did not cause a rejection
    flags: list[tuple[str, str]] = field(default_factory=list)

    def check(self) -> None:
        if self.output_count > self.input_count or self.output_bytes > self.input_bytes:
            raise InvariantViolation(f"{self.stage.value}: output exceeds input")

    @property
    def retention(self) -> Optional[float]:
        """Percent of input bytes retained, or None for an empty stage."""
        if self.input_bytes <= 0:
            return None
        return 100.0 * self.output_bytes / self.input_bytes

    def reject(self, path: str, reason: str) -> None:
        self.rejections.append((path, reason))

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage.value,
            "input_count": self.input_count,
            "output_count": self.output_count,
            "input_bytes": self.input_bytes,
            "output_bytes": self.output_bytes,
            "retention": self.retention,
            "rejections": [list(r) for r in self.rejections],
            "flags": [list(f) for f in self.flags],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StageReport":
        return cls(
            stage=Stage(data["stage"]),
            input_count=data["input_count"],
            output_count=data["output_count"],
            input_bytes=data["input_bytes"],
            output_bytes=data["output_bytes"],
            rejections=[tuple(r) for r in data.get("rejections", [])],
            flags=[tuple(f) for f in data.get("flags", [])],
        )


def _port_to_dict(port: PortSpec) -> dict[str, Any]:
    width: Any = port.bit_width if isinstance(port.bit_width, int) else port.bit_width.expression
    return {"name": port.name, "direction": port.direction, "bit_width": width}


def record_to_dict(record: ModuleRecord) -> dict[str, Any]:
    return {
        "module_name": record.module_name,
        "ports": [_port_to_dict(p) for p in record.ports],
        "comments": list(record.comments),
        "verilog_code": record.verilog_code,
        "token_count": record.token_count,
        "description": record.description,
    }


def serialize_record(record: ModuleRecord, indent: Optional[int] = 2) -> str:
    """Render a record as JSON with the fixed key order.

    Non-ASCII text is written as-is so that code round-trips byte-identically.
    """
    return json.dumps(record_to_dict(record), indent=indent, ensure_ascii=False)


def _require(obj: dict[str, Any], key: str) -> Any:
    if key not in obj:
        raise MissingField(key)
    return obj[key]


def _port_from_dict(obj: Any) -> PortSpec:
    if not isinstance(obj, dict):
        raise InvariantViolation("port entry is not an object")
    extra = set(obj) - set(PORT_KEYS)
    if extra:
        raise InvariantViolation(f"unknown port keys: {sorted(extra)}")
    name = _require(obj, "name")
    direction = _require(obj, "direction")
    width = _require(obj, "bit_width")
    if isinstance(width, str):
        width = Unresolved(width)
    elif isinstance(width, bool) or not isinstance(width, int):
        raise InvariantViolation(f"port {name}: bad bit_width {width!r}")
    if not isinstance(name, str):
        raise InvariantViolation("port name must be text")
    return PortSpec(name=name, direction=direction, bit_width=width)


def record_from_dict(obj: Any) -> ModuleRecord:
    if not isinstance(obj, dict):
        raise MalformedJson("record is not a JSON object")
    extra = set(obj) - set(RECORD_KEYS)
    if extra:
        raise InvariantViolation(f"unknown keys: {sorted(extra)}")
    for key in RECORD_KEYS:
        _require(obj, key)
    if not isinstance(obj["ports"], list) or not isinstance(obj["comments"], list):
        raise InvariantViolation("ports and comments must be lists")
    if not all(isinstance(c, str) for c in obj["comments"]):
        raise InvariantViolation("comments must be text")
    for key in ("module_name", "verilog_code"):
        if not isinstance(obj[key], str):
            raise InvariantViolation(f"{key} must be text")
    record = ModuleRecord(
        module_name=obj["module_name"],
        ports=[_port_from_dict(p) for p in obj["ports"]],
        comments=list(obj["comments"]),
        verilog_code=obj["verilog_code"],
        token_count=obj["token_count"],
        description=obj["description"],
    )
    record.validate()
    return record


def deserialize_record(text: str) -> ModuleRecord:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedJson(str(exc)) from exc
    return record_from_dict(obj)


def record_filename(module_name: str, taken: set[str]) -> str:
    """Pick ``<name>.json``, or ``<name>-<n>.json`` when the name is taken."""
    candidate = f"{module_name}.json"
    n = 1
    while candidate in taken:
        candidate = f"{module_name}-{n}.json"
        n += 1
    taken.add(candidate)
    return candidate
