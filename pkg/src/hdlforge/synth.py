"""Project-level synthesizability checks.

For each project: map module names to declaring files, expand every
choice among same-named modules into a scenario, probe top-module
candidates in order and stop at the first scenario that synthesizes.
"""

from __future__ import annotations

import fnmatch
import hashlib
import itertools
import json
import logging
import os
import re
import shutil
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .errors import ConfigError, ParseError, ToolFailure
from .ingest import group_projects
from .model import ProjectUnit, SourceFile, Stage, StageReport
from .syntax import Transcript
from .verilog import find_instantiations, find_modules

log = logging.getLogger(__name__)

DEFAULT_MAX_SCENARIOS = 64
DEFAULT_PROBE_BUDGET = 8


class ParseFailure(ParseError):
    def __init__(self, path: str, detail: str = "") -> None:
        super().__init__(f"{path}: {detail or 'no module declaration'}")
        self.path = path


class TopBasis(str, Enum):
    NAME_HEURISTIC = "NameHeuristic"
    ITERATIVE_PROBE = "IterativeProbe"


@dataclass(frozen=True)
class TopCandidate:
    module_name: str
    file: str
    basis: TopBasis


@dataclass(frozen=True)
class SynthScenario:
    selected_files: tuple[str, ...]
    top: Optional[TopCandidate] = None

    def with_top(self, top: TopCandidate) -> "SynthScenario":
        return SynthScenario(self.selected_files, top)


@dataclass
class SynthResult:
    failure: bool
    output: str
    scenario: SynthScenario
    errors: list[str] = field(default_factory=list)


@dataclass
class ProjectSynthOutcome:
    project_id: str
    passed: bool
    results: list[SynthResult]
    retained: list[str]
    reason: str = ""
    scenario_count: int = 0

    def log_entry(self) -> dict:
        return {
            "project": self.project_id,
            "passed": self.passed,
            "reason": self.reason,
            "scenarios": self.scenario_count,
            "tried": [
                {
                    "files": list(r.scenario.selected_files),
                    "top": r.scenario.top.module_name if r.scenario.top else None,
                    "failure": r.failure,
                    "transcript_md5": hashlib.md5(r.output.encode()).hexdigest(),
                }
                for r in self.results
            ],
        }


@dataclass
class SynthPatterns:
    """Non-tolerable output lines; the defaults target Yosys."""

    errors: list[str] = field(
        default_factory=lambda: [
            r"^ERROR:",
            r"is not part of the design",
            r"Can't resolve module",
            r"[Uu]nresolved (?:module|reference)",
        ]
    )

    def __post_init__(self) -> None:
        try:
            self._compiled = [re.compile(p, re.MULTILINE) for p in self.errors]
        except re.error as exc:
            raise ConfigError(f"bad synthesis pattern: {exc}") from exc

    def matches(self, output: str) -> list[str]:
        found = []
        for line in output.splitlines():
            if any(p.search(line) for p in self._compiled):
                found.append(line.strip())
        return found


def classify_synthesis(output: str, patterns: Optional[SynthPatterns] = None) -> tuple[bool, list[str]]:
    errors = (patterns or SynthPatterns()).matches(output)
    return bool(errors), errors


# ---------------------------------------------------------------- module maps

def _declared(file: SourceFile) -> list[tuple[str, str]]:
    """(module name, module code) for each module in a file."""
    text = file.text
    try:
        spans = find_modules(text)
    except ParseError as exc:
        raise ParseFailure(file.path, str(exc)) from exc
    return [(s.name, text[s.start:s.end]) for s in spans]


def collect_unique_modules(project: ProjectUnit) -> dict[str, list[str]]:
    """Module name -> sorted declaring file paths."""
    modules: dict[str, list[str]] = {}
    for f in project.files:
        for name, _ in _declared(f):
            paths = modules.setdefault(name, [])
            if f.path not in paths:
                paths.append(f.path)
    return {name: sorted(paths) for name, paths in sorted(modules.items())}


def enumerate_scenarios(unique_modules: dict[str, list[str]]) -> tuple[list[SynthScenario], int]:
    """All consistent file selections, plus the raw cartesian size.

    Files declaring a name that no other file declares are always selected;
    each colliding name picks one of its declaring files.
    """
    file_names: dict[str, set[str]] = {}
    for name, paths in unique_modules.items():
        for p in paths:
            file_names.setdefault(p, set()).add(name)
    required = {paths[0] for paths in unique_modules.values() if len(paths) == 1}
    collisions = [name for name, paths in unique_modules.items() if len(paths) > 1]
    total = 1
    for name in collisions:
        total *= len(unique_modules[name])

    scenarios: list[SynthScenario] = []
    seen: set[tuple[str, ...]] = set()
    for choice in itertools.product(*(unique_modules[n] for n in collisions)):
        selected = required | set(choice)
        declared = [n for p in selected for n in file_names[p]]
        if len(declared) != len(set(declared)):
            continue
        if set(declared) != set(unique_modules):
            continue
        key = tuple(sorted(selected))
        if key not in seen:
            seen.add(key)
            scenarios.append(SynthScenario(key))
    return scenarios, total


def determine_top_module(
    project: ProjectUnit, unique_modules: dict[str, list[str]]
) -> list[TopCandidate]:
    """Probe order: "top" in module or file name, then uninstantiated roots, then the rest."""
    if not unique_modules:
        return []
    by_path = {f.path: f for f in project.files}
    code: dict[tuple[str, str], str] = {}
    for paths in unique_modules.values():
        for p in paths:
            if p in by_path:
                for name, text in _declared(by_path[p]):
                    code[(name, p)] = text
    names = set(unique_modules)
    instantiated: set[str] = set()
    for (name, _), text in code.items():
        instantiated |= find_instantiations(text, names - {name})

    pairs = sorted((name, p) for name, paths in unique_modules.items() for p in paths)

    def is_heuristic(name: str, path: str) -> bool:
        stem = Path(path).stem
        return "top" in name.lower() or "top" in stem.lower()

    heur = [pr for pr in pairs if is_heuristic(*pr)]
    heur.sort(key=lambda pr: (pr[0] in instantiated, pr))
    rest = [pr for pr in pairs if not is_heuristic(*pr)]
    roots = [pr for pr in rest if pr[0] not in instantiated]
    others = [pr for pr in rest if pr[0] in instantiated]
    return [TopCandidate(n, p, TopBasis.NAME_HEURISTIC) for n, p in heur] + [
        TopCandidate(n, p, TopBasis.ITERATIVE_PROBE) for n, p in roots + others
    ]


# ---------------------------------------------------------------- scripts and backends

@dataclass(frozen=True)
class YosysVocabulary:
    read: str = 'read_verilog "{file}"'
    hierarchy: str = "hierarchy -check -top {top}"
    synth: str = "synth -top {top}"


def build_synthesis_script(scenario: SynthScenario, vocabulary: YosysVocabulary = YosysVocabulary()) -> str:
    if not scenario.selected_files:
        raise ValueError("scenario has no files")
    if scenario.top is None:
        raise ValueError("scenario has no top module")
    lines = [vocabulary.read.format(file=f) for f in scenario.selected_files]
    lines.append(vocabulary.hierarchy.format(top=scenario.top.module_name))
    lines.append(vocabulary.synth.format(top=scenario.top.module_name))
    return "\n".join(lines)


@dataclass
class ExternalSynthesizer:
    tool_path: str = "yosys"
    timeout: float = 300.0
    base_dir: Optional[str] = None

    def resolve(self) -> str:
        found = shutil.which(self.tool_path)
        if not found:
            raise ToolFailure(f"synthesizer not found: {self.tool_path}")
        return found

    def run(self, script: str, scenario: SynthScenario) -> Transcript:
        tool = self.resolve()
        cmd = [tool, "-q", "-p", "; ".join(script.splitlines())]
        try:
            result = subprocess.run(
                cmd,
                capture_output=True,
                text=True,
                errors="replace",
                timeout=self.timeout,
                cwd=self.base_dir,
            )
        except subprocess.TimeoutExpired as exc:
            raise ToolFailure(f"timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise ToolFailure(f"could not run {tool}: {exc}") from exc
        return Transcript(result.returncode, result.stdout, result.stderr)


@dataclass
class StubSynthesizer:
    """Deterministic backend for tests and hermetic runs.

    A scenario fails when any selected file matches a ``fail_files`` glob,
    or when ``tops`` is given and the probed top is not listed. ``decide``
    overrides both and returns True for a passing scenario.
    """

    fail_files: list[str] = field(default_factory=list)
    tops: Optional[list[str]] = None
    tool_failure_files: list[str] = field(default_factory=list)
    decide: Optional[Callable[[SynthScenario], bool]] = None

    @staticmethod
    def _match(path: str, patterns: Sequence[str]) -> bool:
        base = path.rsplit("/", 1)[-1]
        return any(fnmatch.fnmatch(path, p) or fnmatch.fnmatch(base, p) for p in patterns)

    def run(self, script: str, scenario: SynthScenario) -> Transcript:
        if any(self._match(f, self.tool_failure_files) for f in scenario.selected_files):
            raise ToolFailure("stub tool failure")
        if self.decide is not None:
            ok = self.decide(scenario)
        else:
            bad = [f for f in scenario.selected_files if self._match(f, self.fail_files)]
            ok = not bad and (self.tops is None or scenario.top.module_name in self.tops)
        if ok:
            return Transcript(0, "", "")
        top = scenario.top.module_name if scenario.top else "?"
        return Transcript(
            1, "", f"ERROR: Module `{top}' cannot be synthesized: delay or unsupported construct."
        )


SynthBackend = Union[ExternalSynthesizer, StubSynthesizer]


def run_synth_check(
    project: ProjectUnit,
    backend: SynthBackend,
    max_scenarios: int = DEFAULT_MAX_SCENARIOS,
    probe_budget: int = DEFAULT_PROBE_BUDGET,
    patterns: Optional[SynthPatterns] = None,
) -> ProjectSynthOutcome:
    parse_failures = []
    usable = []
    for f in project.files:
        try:
            _declared(f)
            usable.append(f)
        except ParseFailure as exc:
            parse_failures.append(f"{exc}")
    if not usable:
        return ProjectSynthOutcome(project.project_id, False, [], [], "no module declarations")
    unit = ProjectUnit(project.project_id, project.root, usable, project.origin, project.notes)
    modules = collect_unique_modules(unit)
    scenarios, total = enumerate_scenarios(modules)
    if total > max_scenarios:
        return ProjectSynthOutcome(
            project.project_id, False, [], [], f"ScenarioExplosion: {total} > {max_scenarios}", total
        )
    results: list[SynthResult] = []
    by_path = {f.path: f for f in usable}
    last_error = "no synthesizable top found"
    for scenario in scenarios:
        files = [by_path[p] for p in scenario.selected_files]
        scoped = {n: [p for p in ps if p in scenario.selected_files] for n, ps in modules.items()}
        scoped = {n: ps for n, ps in scoped.items() if ps}
        sub = ProjectUnit(project.project_id, project.root, files, project.origin)
        for top in determine_top_module(sub, scoped)[:probe_budget]:
            probe = scenario.with_top(top)
            script = build_synthesis_script(probe)
            try:
                transcript = backend.run(script, probe)
            except ToolFailure as exc:
                return ProjectSynthOutcome(
                    project.project_id, False, results, [], f"ToolFailure: {exc}", len(scenarios)
                )
            output = transcript.stdout.strip() + "\n" + transcript.stderr.strip()
            failure, errors = classify_synthesis(output, patterns)
            results.append(SynthResult(failure, output, probe, errors))
            if not failure:
                return ProjectSynthOutcome(
                    project.project_id, True, results, list(scenario.selected_files), "", len(scenarios)
                )
            if errors:
                last_error = errors[0]
    return ProjectSynthOutcome(project.project_id, False, results, [], last_error, len(scenarios))


def run_synth_stage(
    files: Sequence[SourceFile],
    backend: SynthBackend,
    max_scenarios: int = DEFAULT_MAX_SCENARIOS,
    probe_budget: int = DEFAULT_PROBE_BUDGET,
    patterns: Optional[SynthPatterns] = None,
    jobs: int = 1,
) -> tuple[list[SourceFile], StageReport, list[ProjectSynthOutcome]]:
    """Check each project; keep exactly the files of its passing scenario."""
    if isinstance(backend, ExternalSynthesizer):
        backend.resolve()
    files = sorted(files, key=lambda f: f.path)
    projects = group_projects(list(files)) if files else []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(
            pool.map(lambda p: run_synth_check(p, backend, max_scenarios, probe_budget, patterns), projects)
        )
    report = StageReport(Stage.SYNTHESIS, input_count=len(files), input_bytes=sum(f.size for f in files))
    kept: list[SourceFile] = []
    for project, outcome in zip(projects, outcomes):
        retained = set(outcome.retained)
        for f in project.files:
            if f.path in retained:
                kept.append(f)
                report.output_count += 1
                report.output_bytes += f.size
            elif outcome.passed:
                report.reject(f.path, "not in passing scenario")
            else:
                report.reject(f.path, outcome.reason)
    kept.sort(key=lambda f: f.path)
    return kept, report, outcomes


def write_project_log(outcomes: Sequence[ProjectSynthOutcome], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.log_entry(), sort_keys=True) + "\n")
