"""Staged end-to-end run: filter, dedup, syntax, synthesis, extraction + store.

Each stage reads one staging directory and writes the next one, with its
report next to it. A stage whose fingerprint (stage settings plus a digest
of its input tree) matches the last completed run is skipped and its saved
report reused, so a rerun with unchanged inputs does no work and leaves
every output byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import shutil
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .analytics import compute_stats, render_report
from .dedup import deduplicate_groups, write_groups_report
from .describe import EndpointConfig, ExternalDescriber, TemplateDescriber
from .errors import ConfigError, ForgeError, StageFailure, StoreUnavailable, ToolFailure
from .extract import extract_project, write_records
from .ingest import FilterConfig, load_tree, scan_projects, write_files
from .instruct import export_pairs, parse_budget
from .model import STAGE_ORDER, Stage, StageReport, record_from_dict
from .store import DEFAULT_PORTLESS_EXEMPT, Inserted, ModuleStore
from .syntax import ExternalCompiler, StubCompiler, run_syntax_stage, write_failure_log
from .synth import (
    DEFAULT_MAX_SCENARIOS,
    DEFAULT_PROBE_BUDGET,
    ExternalSynthesizer,
    StubSynthesizer,
    run_synth_stage,
    write_project_log,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGE_DIRS = {
    Stage.FILTER: "01_filtered",
    Stage.DEDUP: "02_unique",
    Stage.SYNTAX: "03_syntax_ok",
    Stage.SYNTHESIS: "04_synth_ok",
    Stage.DB_VALIDATION: "05_records",
}

# names accepted on the command line and in [stages]
STAGE_ALIASES = {
    "filter": Stage.FILTER,
    "ingest": Stage.FILTER,
    "dedup": Stage.DEDUP,
    "syntax": Stage.SYNTAX,
    "synth": Stage.SYNTHESIS,
    "synthesis": Stage.SYNTHESIS,
    "extract": Stage.DB_VALIDATION,
    "db": Stage.DB_VALIDATION,
}


def parse_stage(name: str) -> Stage:
    try:
        return STAGE_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown stage {name!r}; expected one of {sorted(STAGE_ALIASES)}") from None


@dataclass
class SyntaxSettings:
    backend: str = "external"
    tool_path: str = "iverilog"
    timeout: float = 30.0
    stub_verdicts: dict[str, str] = field(default_factory=dict)
    stub_default: str = "pass"


@dataclass
class SynthSettings:
    backend: str = "external"
    tool_path: str = "yosys"
    timeout: float = 300.0
    max_scenarios: int = DEFAULT_MAX_SCENARIOS
    probe_budget: int = DEFAULT_PROBE_BUDGET
    stub_fail_files: list[str] = field(default_factory=list)
    stub_tops: Optional[list[str]] = None


@dataclass
class DescribeSettings:
    mode: str = "fallback"
    url: str = ""
    model: str = "o3-mini"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 2
    min_interval: float = 0.0


@dataclass
class PipelineConfig:
    root: Optional[str] = None
    work: str = "forge-work"
    jobs: int = 1
    stages: dict[str, bool] = field(default_factory=lambda: {s.value: True for s in STAGE_ORDER})
    filter: FilterConfig = field(default_factory=FilterConfig)
    syntax: SyntaxSettings = field(default_factory=SyntaxSettings)
    synthesis: SynthSettings = field(default_factory=SynthSettings)
    describe: DescribeSettings = field(default_factory=DescribeSettings)
    store_url: Optional[str] = None
    portless_exempt: list[str] = field(default_factory=lambda: list(DEFAULT_PORTLESS_EXEMPT))
    export_budget: Union[str, int, None] = None
    # per-stage input directory overrides
    inputs: dict[str, str] = field(default_factory=dict)

    def enabled(self) -> list[Stage]:
        return [s for s in STAGE_ORDER if self.stages.get(s.value, False)]

    def only(self, stage: Stage) -> None:
        self.stages = {s.value: s is stage for s in STAGE_ORDER}

    def staging(self, stage: Stage) -> Path:
        return Path(self.work) / STAGE_DIRS[stage]

    def report_path(self, stage: Stage) -> Path:
        return Path(self.work) / f"{STAGE_DIRS[stage]}.report.json"

    def store(self) -> str:
        return self.store_url or os.environ.get("FORGE_DB_URL") or str(Path(self.work) / "forge.db")

    def input_dir(self, stage: Stage) -> Path:
        if stage.value in self.inputs:
            return Path(self.inputs[stage.value])
        if stage is Stage.FILTER:
            if not self.root:
                raise ConfigError("no corpus root configured for the filter stage")
            return Path(self.root)
        return self.staging(STAGE_ORDER[STAGE_ORDER.index(stage) - 1])

    def validate(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.syntax.backend not in ("external", "stub"):
            raise ConfigError(f"unknown syntax backend {self.syntax.backend!r}")
        if self.synthesis.backend not in ("external", "stub"):
            raise ConfigError(f"unknown synthesis backend {self.synthesis.backend!r}")
        if self.describe.mode not in ("external", "fallback"):
            raise ConfigError(f"unknown describe mode {self.describe.mode!r}")
        if self.describe.mode == "external" and not self.describe.url:
            raise ConfigError("describe mode 'external' needs an endpoint url")
        enabled = self.enabled()
        if not enabled:
            raise ConfigError("no stage enabled")
        for stage in enabled:
            if stage is Stage.FILTER or stage.value in self.inputs:
                continue
            prev = STAGE_ORDER[STAGE_ORDER.index(stage) - 1]
            # a disabled predecessor is fine when an earlier run left its output
            if prev not in enabled and not self.staging(prev).is_dir():
                raise ConfigError(
                    f"{stage.value} needs {STAGE_DIRS[prev]} from an earlier run or an --in override"
                )
        try:
            parse_budget(self.export_budget)
        except ValueError as exc:
            raise ConfigError(f"bad export budget {self.export_budget!r}") from exc


PIPELINE_SECTIONS = {"pipeline", "stages", "filter", "syntax", "synthesis", "describe", "store", "export"}


def _settings(cls, data: dict, section: str):
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**data)


def config_from_mapping(data: dict, base_dir: Union[str, os.PathLike] = ".") -> PipelineConfig:
    """Build a config from a parsed TOML document; relative paths resolve against ``base_dir``."""
    unknown = set(data) - PIPELINE_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    base = Path(base_dir)
    cfg = PipelineConfig()
    pipe = dict(data.get("pipeline", {}))
    for key in list(pipe):
        if key not in ("root", "work", "jobs"):
            raise ConfigError(f"unknown key [pipeline] {key}")
    if "root" in pipe:
        cfg.root = str(base / pipe["root"])
    if "work" in pipe:
        cfg.work = str(base / pipe["work"])
    cfg.jobs = int(pipe.get("jobs", cfg.jobs))
    for name, on in data.get("stages", {}).items():
        cfg.stages[parse_stage(name).value] = bool(on)
    cfg.filter = FilterConfig.from_mapping(data.get("filter", {}))

    syntax = dict(data.get("syntax", {}))
    stub = syntax.pop("stub", {})
    cfg.syntax = _settings(SyntaxSettings, syntax, "syntax")
    if stub:
        cfg.syntax.stub_verdicts = dict(stub.get("verdicts", {}))
        cfg.syntax.stub_default = stub.get("default", "pass")

    synthesis = dict(data.get("synthesis", {}))
    stub = synthesis.pop("stub", {})
    cfg.synthesis = _settings(SynthSettings, synthesis, "synthesis")
    if stub:
        cfg.synthesis.stub_fail_files = list(stub.get("fail_files", []))
        cfg.synthesis.stub_tops = stub.get("tops")

    cfg.describe = _settings(DescribeSettings, data.get("describe", {}), "describe")

    store = data.get("store", {})
    for key in store:
        if key not in ("url", "portless_exempt"):
            raise ConfigError(f"unknown key [store] {key}")
    cfg.store_url = store.get("url")
    if "portless_exempt" in store:
        cfg.portless_exempt = list(store["portless_exempt"])

    export = data.get("export", {})
    for key in export:
        if key != "budget":
            raise ConfigError(f"unknown key [export] {key}")
    cfg.export_budget = export.get("budget")
    return cfg


def load_config(path: Optional[Union[str, os.PathLike]] = None) -> PipelineConfig:
    """Read a TOML config; ``FORGE_CONFIG`` is the fallback location."""
    path = path or os.environ.get("FORGE_CONFIG")
    if not path:
        return PipelineConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_mapping(data, Path(path).parent)


# ---------------------------------------------------------------- backends

def syntax_backend(cfg: PipelineConfig, base_dir: Optional[Path] = None):
    s = cfg.syntax
    if s.backend == "stub":
        return StubCompiler(dict(s.stub_verdicts), s.stub_default)
    return ExternalCompiler(s.tool_path, timeout=s.timeout, base_dir=str(base_dir) if base_dir else None)


def synth_backend(cfg: PipelineConfig, base_dir: Optional[Path] = None):
    s = cfg.synthesis
    if s.backend == "stub":
        return StubSynthesizer(list(s.stub_fail_files), s.stub_tops)
    return ExternalSynthesizer(s.tool_path, s.timeout, str(base_dir) if base_dir else None)


def describer(cfg: PipelineConfig):
    d = cfg.describe
    if d.mode == "external":
        return ExternalDescriber(
            EndpointConfig(d.url, d.model, d.api_key_env, d.timeout, d.retries, min_interval=d.min_interval)
        )
    return TemplateDescriber()


# ---------------------------------------------------------------- fingerprints

def tree_digest(root: Union[str, os.PathLike]) -> str:
    """Digest of every file's relative path and content under ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    if root.is_dir():
        for path in sorted(p for p in root.rglob("*") if p.is_file()):
            h.update(path.relative_to(root).as_posix().encode())
            h.update(b"\0")
            h.update(hashlib.md5(path.read_bytes()).digest())
    return h.hexdigest()


def stage_settings(cfg: PipelineConfig, stage: Stage) -> dict[str, Any]:
    if stage is Stage.FILTER:
        return asdict(cfg.filter)
    if stage is Stage.SYNTAX:
        return asdict(cfg.syntax)
    if stage is Stage.SYNTHESIS:
        return asdict(cfg.synthesis)
    if stage is Stage.DB_VALIDATION:
        return {
            "describe": asdict(cfg.describe),
            # the default store lives in the work dir; only an explicit URL matters
            "store": cfg.store_url or os.environ.get("FORGE_DB_URL") or "<work>/forge.db",
            "portless_exempt": cfg.portless_exempt,
            "budget": str(cfg.export_budget),
        }
    return {}


def fingerprint(cfg: PipelineConfig, stage: Stage, input_dir: Path) -> str:
    doc = {"stage": stage.value, "settings": stage_settings(cfg, stage), "input": tree_digest(input_dir)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def _state_path(cfg: PipelineConfig, stage: Stage) -> Path:
    return Path(cfg.work) / ".state" / f"{STAGE_DIRS[stage]}.fingerprint"


def _outputs(cfg: PipelineConfig, stage: Stage) -> list[Path]:
    paths = [cfg.staging(stage), cfg.report_path(stage)]
    if stage is Stage.DB_VALIDATION:
        paths += [Path(cfg.work) / "records.jsonl", Path(cfg.work) / "pairs.jsonl"]
    return paths


# ---------------------------------------------------------------- stages

def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _write_report(report: StageReport, path: Path) -> None:
    report.rejections.sort()
    report.flags.sort()
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _summary(report: StageReport) -> None:
    retained = "n/a" if report.retention is None else f"{report.retention:.2f}%"
    log.info(
        "%s: %d -> %d files, %d -> %d bytes (%s retained)",
        report.stage.value,
        report.input_count,
        report.output_count,
        report.input_bytes,
        report.output_bytes,
        retained,
    )


def _run_filter(cfg: PipelineConfig, src: Path, out: Path) -> StageReport:
    projects, report = scan_projects(src, cfg.filter)
    write_files([f for p in projects for f in p.files], out)
    return report


def _run_dedup(cfg: PipelineConfig, src: Path, out: Path) -> StageReport:
    _, report, groups = deduplicate_groups(load_tree(src), out, src_root=src, jobs=cfg.jobs)
    write_groups_report(groups, Path(cfg.work) / "dedup_groups.json")
    return report


def _run_syntax(cfg: PipelineConfig, src: Path, out: Path) -> StageReport:
    backend = syntax_backend(cfg, src)
    if isinstance(backend, ExternalCompiler):
        try:
            backend.resolve()
        except ToolFailure as exc:
            raise StageFailure(Stage.SYNTAX.value, str(exc)) from exc
    passed, report, outcomes = run_syntax_stage(load_tree(src), backend, jobs=cfg.jobs)
    write_files(passed, out)
    write_failure_log(outcomes, Path(cfg.work) / "syntax_failures.jsonl")
    return report


def _run_synth(cfg: PipelineConfig, src: Path, out: Path) -> StageReport:
    s = cfg.synthesis
    try:
        kept, report, outcomes = run_synth_stage(
            load_tree(src), synth_backend(cfg, src), s.max_scenarios, s.probe_budget, jobs=cfg.jobs
        )
    except ToolFailure as exc:
        raise StageFailure(Stage.SYNTHESIS.value, str(exc)) from exc
    write_files(kept, out)
    write_project_log(outcomes, Path(cfg.work) / "synth_projects.jsonl")
    return report


def _run_records(cfg: PipelineConfig, src: Path, out: Path) -> StageReport:
    records, report = extract_project(load_tree(src), describer(cfg), jobs=cfg.jobs)
    write_records(records, out)
    store_url = cfg.store()
    if "://" not in store_url:
        # a file store is rebuilt from scratch so reruns stay reproducible
        db = Path(store_url)
        if db.exists():
            db.unlink()
    try:
        with ModuleStore(store_url, cfg.portless_exempt) as store:
            store.init_schema()
            for rec in records:
                result = store.insert_record(rec)
                if not isinstance(result, Inserted):
                    size = len(rec.verilog_code.encode())
                    report.output_count -= 1
                    report.output_bytes -= size
                    report.reject(f"db::{rec.module_name}", result.reason)
                    log.info("db reject %s: %s", rec.module_name, result.reason)
            store.export_jsonl(Path(cfg.work) / "records.jsonl")
            export_pairs(store, parse_budget(cfg.export_budget), Path(cfg.work) / "pairs.jsonl")
    except StoreUnavailable as exc:
        raise StageFailure(Stage.DB_VALIDATION.value, str(exc)) from exc
    return report


RUNNERS = {
    Stage.FILTER: _run_filter,
    Stage.DEDUP: _run_dedup,
    Stage.SYNTAX: _run_syntax,
    Stage.SYNTHESIS: _run_synth,
    Stage.DB_VALIDATION: _run_records,
}


@dataclass
class PipelineResult:
    status: int
    reports: list[StageReport]
    skipped: list[Stage]
    module_count: Optional[int]
    report: dict


def plan(cfg: PipelineConfig) -> list[tuple[Stage, Path, Path]]:
    return [(s, cfg.input_dir(s), cfg.staging(s)) for s in cfg.enabled()]


def run_stage(cfg: PipelineConfig, stage: Stage, force: bool = False) -> tuple[StageReport, bool]:
    """Run one stage unless its fingerprint is current; returns (report, skipped)."""
    src = cfg.input_dir(stage)
    if not src.is_dir():
        raise StageFailure(stage.value, f"input directory {src} does not exist")
    fp = fingerprint(cfg, stage, src)
    state = _state_path(cfg, stage)
    if (
        not force
        and state.is_file()
        and state.read_text().strip() == fp
        and all(p.exists() for p in _outputs(cfg, stage))
    ):
        log.info("%s: up to date, skipping", stage.value)
        report = StageReport.from_dict(json.loads(cfg.report_path(stage).read_text(encoding="utf-8")))
        return report, True
    if state.exists():
        state.unlink()
    out = _fresh_dir(cfg.staging(stage))
    log.info("%s: %s -> %s", stage.value, src, out)
    try:
        report = RUNNERS[stage](cfg, src, out)
        report.check()
    except StageFailure:
        raise
    except (OSError, ForgeError) as exc:
        raise StageFailure(stage.value, f"{type(exc).__name__}: {exc}") from exc
    _write_report(report, cfg.report_path(stage))
    state.parent.mkdir(parents=True, exist_ok=True)
    state.write_text(fp + "\n")
    _summary(report)
    return report, False


def consolidated_report(
    cfg: PipelineConfig, extra: Optional[Union[str, os.PathLike]] = None
) -> tuple[dict, Optional[int]]:
    """Gather every stage report on disk plus corpus stats into ``<work>/report``."""
    reports = [
        StageReport.from_dict(json.loads(cfg.report_path(s).read_text(encoding="utf-8")))
        for s in STAGE_ORDER
        if cfg.report_path(s).is_file()
    ]
    stats, module_count = None, None
    records_jsonl = Path(cfg.work) / "records.jsonl"
    if cfg.report_path(Stage.DB_VALIDATION).is_file() and records_jsonl.is_file():
        with open(records_jsonl, encoding="utf-8") as fh:
            records = [record_from_dict(json.loads(line)) for line in fh if line.strip()]
        stats = compute_stats(records)
        module_count = len(records)
    doc = render_report(stats, reports, Path(cfg.work) / "report")
    if extra:
        Path(extra).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc, module_count


def run_pipeline(
    cfg: PipelineConfig, force: bool = False, report_path: Optional[Union[str, os.PathLike]] = None
) -> PipelineResult:
    """Run every enabled stage in order; a failing stage stops the run.

    Raises ConfigError for an invalid config and StageFailure for a stage
    that could not complete.
    """
    cfg.validate()
    Path(cfg.work).mkdir(parents=True, exist_ok=True)
    reports, skipped = [], []
    for stage in cfg.enabled():
        report, was_skipped = run_stage(cfg, stage, force)
        reports.append(report)
        if was_skipped:
            skipped.append(stage)
    doc, module_count = consolidated_report(cfg, report_path)
    return PipelineResult(0, reports, skipped, module_count, doc)


def describe_plan(cfg: PipelineConfig) -> list[str]:
    lines = []
    for stage, src, out in plan(cfg):
        lines.append(f"{stage.value}: {src} -> {out}")
    if Stage.DB_VALIDATION in cfg.enabled():
        budget = parse_budget(cfg.export_budget)
        lines.append(f"store: {cfg.store()}")
        lines.append(f"export budget: {'unlimited' if math.isinf(budget) else int(budget)}")
    return lines
