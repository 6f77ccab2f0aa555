"""Command-line entry point: one subcommand per stage plus ``run``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analytics import compute_stats, render_report
from .dedup import deduplicate_groups, write_groups_report
from .describe import EndpointConfig, ExternalDescriber, TemplateDescriber
from .errors import ConfigError, ForgeError, StageFailure
from .extract import extract_project, write_records
from .ingest import FilterConfig, load_tree, scan_projects, write_files
from .instruct import PRESETS, export_pairs, parse_budget
from .model import StageReport, deserialize_record, serialize_record
from .pipeline import (
    PIPELINE_SECTIONS,
    describe_plan,
    load_config,
    parse_stage,
    run_pipeline,
    tomllib,
)
from .store import Inserted, ModuleQuery, ModuleStore
from .syntax import ExternalCompiler, StubCompiler, run_syntax_stage, write_failure_log
from .synth import ExternalSynthesizer, StubSynthesizer, run_synth_stage, write_project_log

log = logging.getLogger("hdlforge")

EXIT_STAGE_FAILURE = 1
EXIT_CONFIG = 2


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record; no timestamps so logs diff cleanly."""

    def format(self, record: logging.LogRecord) -> str:
        doc = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        if record.exc_info:
            doc["exc"] = self.formatException(record.exc_info)
        return json.dumps(doc, ensure_ascii=False)


def setup_logging(level: str, log_file: Optional[str] = None) -> None:
    handler: logging.Handler = logging.FileHandler(log_file, encoding="utf-8") if log_file else logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("hdlforge")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _write_stage_report(report: StageReport, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _print_summary(report: StageReport) -> None:
    retained = "n/a" if report.retention is None else f"{report.retention:.2f}%"
    print(
        f"{report.stage.value}: kept {report.output_count}/{report.input_count} "
        f"({report.output_bytes}/{report.input_bytes} bytes, {retained})"
    )


def _dry(args, message: str) -> bool:
    if args.dry_run:
        print(f"dry run: {message}")
    return args.dry_run


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot load {path}: {exc}") from exc


# ---------------------------------------------------------------- stage commands

def cmd_ingest(args) -> int:
    path = args.config or os.environ.get("FORGE_CONFIG")
    data = _load_toml(path) if path else {}
    # accept either a bare filter document or a full pipeline config
    if data.keys() & PIPELINE_SECTIONS:
        data = data.get("filter", {})
    config = FilterConfig.from_mapping(data)
    if _dry(args, f"filter {args.root} -> {args.out}"):
        return 0
    projects, report = scan_projects(args.root, config)
    write_files([f for p in projects for f in p.files], args.out)
    _write_stage_report(report, args.report)
    _print_summary(report)
    return 0


def cmd_dedup(args) -> int:
    if _dry(args, f"dedup {args.src} -> {args.out}"):
        return 0
    _, report, groups = deduplicate_groups(load_tree(args.src), args.out, src_root=args.src, jobs=args.jobs)
    if args.report:
        write_groups_report(groups, args.report)
    _print_summary(report)
    return 0


def _parse_pairs(items: Sequence[str], what: str) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"{what} must look like GLOB=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key] = value
    return out


def cmd_syntax(args) -> int:
    if args.backend == "stub":
        backend = StubCompiler(_parse_pairs(args.stub_verdict, "--stub-verdict"))
    else:
        backend = ExternalCompiler(args.tool_path, timeout=args.timeout_secs, base_dir=args.src)
        backend.resolve()
    if _dry(args, f"syntax {args.src} -> {args.out} with {args.backend}"):
        return 0
    passed, report, outcomes = run_syntax_stage(load_tree(args.src), backend, jobs=args.jobs)
    write_files(passed, args.out)
    if args.failure_log:
        write_failure_log(outcomes, args.failure_log)
    _write_stage_report(report, args.report)
    _print_summary(report)
    return 0


def cmd_synth(args) -> int:
    if args.backend == "stub":
        backend = StubSynthesizer(list(args.stub_fail))
    else:
        backend = ExternalSynthesizer(args.tool_path, args.timeout_secs, base_dir=args.src)
        backend.resolve()
    if _dry(args, f"synth {args.src} -> {args.out} with {args.backend}"):
        return 0
    kept, report, outcomes = run_synth_stage(
        load_tree(args.src), backend, args.max_scenarios, args.probe_budget, jobs=args.jobs
    )
    write_files(kept, args.out)
    if args.project_log:
        write_project_log(outcomes, args.project_log)
    _write_stage_report(report, args.report)
    _print_summary(report)
    return 0


def _describer(args):
    if args.describe == "fallback":
        return TemplateDescriber()
    if not args.endpoint:
        raise ConfigError("--describe external needs --endpoint")
    if "://" in args.endpoint:
        return ExternalDescriber(EndpointConfig(args.endpoint))
    data = _load_toml(args.endpoint)
    data = data.get("describe", data)
    data.pop("mode", None)
    try:
        return ExternalDescriber(EndpointConfig(**data))
    except TypeError as exc:
        raise ConfigError(f"bad endpoint config: {exc}") from exc


def cmd_extract(args) -> int:
    client = _describer(args)
    if _dry(args, f"extract {args.src} -> {args.out} ({args.describe} descriptions)"):
        return 0
    records, report = extract_project(load_tree(args.src), client, jobs=args.jobs)
    written = write_records(records, args.out)
    _write_stage_report(report, args.report)
    print(f"wrote {len(written)} records to {args.out}; {len(report.rejections)} modules rejected")
    return 0


# ---------------------------------------------------------------- store commands

def _store(args) -> ModuleStore:
    return ModuleStore(args.db)


def cmd_db(args) -> int:
    if _dry(args, f"db {args.db_command}"):
        return 0
    with _store(args) as store:
        store.init_schema()
        if args.db_command == "init":
            print(f"schema ready at {store.url}")
        elif args.db_command == "insert":
            inserted = rejected = 0
            for path in sorted(Path(args.source).glob("*.json")):
                try:
                    result = store.insert_record(deserialize_record(path.read_text(encoding="utf-8")))
                except ForgeError as exc:
                    log.info("insert rejected %s: %s", path.name, exc)
                    rejected += 1
                    continue
                if isinstance(result, Inserted):
                    inserted += 1
                else:
                    log.info("insert rejected %s: %s", path.name, result.reason)
                    rejected += 1
            print(f"inserted {inserted}, rejected {rejected}")
        elif args.db_command == "export":
            print(f"exported {store.export_jsonl(args.to)} records to {args.to}")
        elif args.db_command == "import":
            inserted, rejected = store.import_jsonl(args.source)
            print(f"imported {inserted}, rejected {rejected}")
        elif args.db_command == "query":
            query = ModuleQuery(
                name_pattern=args.name,
                min_tokens=args.min_tokens,
                max_tokens=args.max_tokens,
                min_ports=args.min_ports,
                max_ports=args.max_ports,
                has_comments=args.has_comments,
            )
            for module_id, record in store.query_modules(query):
                if args.full:
                    print(serialize_record(record, indent=None))
                else:
                    print(f"{module_id}\t{record.module_name}\t{len(record.ports)} ports\t{record.token_count} tokens")
    return 0


def cmd_stats(args) -> int:
    if _dry(args, f"stats {args.db} -> {args.out}"):
        return 0
    reports = []
    for path in args.stage_report or []:
        reports.append(StageReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8"))))
    with _store(args) as store:
        records = [r for _, r in store.query_modules()]
    doc = render_report(compute_stats(records), reports, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(records)} modules; report written to {args.out}")
    return 0


def cmd_export_pairs(args) -> int:
    budget = parse_budget(args.preset if args.preset else args.budget)
    if _dry(args, f"export pairs from {args.db} to {args.out}, budget {budget}"):
        return 0
    with _store(args) as store:
        emitted, skipped = export_pairs(store, budget, args.out)
    print(f"wrote {emitted} pairs to {args.out}; {skipped} over budget")
    return 0


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.work:
        cfg.work = args.work
    if args.root:
        cfg.root = args.root
    if args.jobs:
        cfg.jobs = args.jobs
    if args.only:
        stage = parse_stage(args.only)
        cfg.only(stage)
        if args.src:
            cfg.inputs[stage.value] = args.src
    elif args.src:
        cfg.inputs[cfg.enabled()[0].value] = args.src
    cfg.validate()
    if args.dry_run:
        for line in describe_plan(cfg):
            print(line)
        return 0
    result = run_pipeline(cfg, force=args.force, report_path=args.report)
    for report in result.reports:
        _print_summary(report)
    if result.module_count is not None:
        print(f"modules in store: {result.module_count}")
    return result.status


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker count")
    common.add_argument("--dry-run", action="store_true", default=argparse.SUPPRESS, help="show what would run")
    common.add_argument("--report", default=argparse.SUPPRESS, help="write a JSON report here")
    common.add_argument("--log-level", default=argparse.SUPPRESS, help="debug, info, warning or error")
    common.add_argument("--log-file", default=argparse.SUPPRESS, help="JSON-lines log file (default stderr)")

    parser = argparse.ArgumentParser(prog="forge", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="filter raw projects")
    p.add_argument("--root", required=True, help="directory holding one subdirectory per project")
    p.add_argument("--config", help="TOML filter config (default $FORGE_CONFIG)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("dedup", parents=[common], help="drop byte-identical files")
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dedup)

    for name, helptext in (("syntax", "compile each file"), ("synth", "synthesize each project")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--in", dest="src", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--backend", choices=("external", "stub"), default="external")
        p.add_argument("--tool-path", default="iverilog" if name == "syntax" else "yosys")
        p.add_argument("--timeout-secs", type=float, default=30.0 if name == "syntax" else 300.0)
    syntax_p = sub.choices["syntax"]
    syntax_p.add_argument("--stub-verdict", action="append", default=[], metavar="GLOB=OUTCOME")
    syntax_p.add_argument("--failure-log", help="JSON-lines log of failed files")
    syntax_p.set_defaults(func=cmd_syntax)
    synth_p = sub.choices["synth"]
    synth_p.add_argument("--max-scenarios", type=int, default=64)
    synth_p.add_argument("--probe-budget", type=int, default=8)
    synth_p.add_argument("--stub-fail", action="append", default=[], metavar="GLOB")
    synth_p.add_argument("--project-log", help="JSON-lines log, one entry per project")
    synth_p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="write one JSON record per module")
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--describe", choices=("external", "fallback"), default="fallback")
    p.add_argument("--endpoint", help="endpoint URL or TOML file with endpoint settings")
    p.set_defaults(func=cmd_extract)

    db_common = argparse.ArgumentParser(add_help=False)
    db_common.add_argument("--db", default=None, help="store URL or SQLite path (default $FORGE_DB_URL)")
    p = sub.add_parser("db", parents=[common], help="module store operations")
    dbsub = p.add_subparsers(dest="db_command", required=True)
    dbsub.add_parser("init", parents=[common, db_common])
    q = dbsub.add_parser("insert", parents=[common, db_common])
    q.add_argument("--from", dest="source", required=True, help="directory of record JSON files")
    q = dbsub.add_parser("export", parents=[common, db_common])
    q.add_argument("--to", required=True)
    q = dbsub.add_parser("import", parents=[common, db_common])
    q.add_argument("--from", dest="source", required=True, help="JSONL file")
    q = dbsub.add_parser("query", parents=[common, db_common])
    q.add_argument("--name", help="substring of the module name")
    q.add_argument("--min-tokens", type=int)
    q.add_argument("--max-tokens", type=int)
    q.add_argument("--min-ports", type=int)
    q.add_argument("--max-ports", type=int)
    q.add_argument("--has-comments", action=argparse.BooleanOptionalAction, default=None)
    q.add_argument("--full", action="store_true", help="print whole records as JSON")
    p.set_defaults(func=cmd_db)

    p = sub.add_parser("stats", parents=[common, db_common], help="corpus statistics")
    p.add_argument("--out", required=True)
    p.add_argument("--stage-report", action="append", help="stage report JSON to include")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-pairs", parents=[common, db_common], help="instruction pairs as JSONL")
    p.add_argument("--budget", default="inf", help="max code tokens, a preset name, or inf")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_pairs)

    p = sub.add_parser("run", parents=[common], help="run the whole pipeline")
    p.add_argument("--config", help="TOML pipeline config (default $FORGE_CONFIG)")
    p.add_argument("--work", help="staging directory")
    p.add_argument("--root", help="corpus root, overrides the config")
    p.add_argument("--only", help="run a single stage")
    p.add_argument("--in", dest="src", help="input directory for the first stage that runs")
    p.add_argument("--force", action="store_true", help="ignore fingerprints and rerun")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("jobs", None), ("dry_run", False), ("report", None), ("log_level", "warning"), ("log_file", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.jobs is not None and args.jobs < 1:
        print("forge: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    setup_logging(args.log_level, args.log_file)
    if args.command != "run" and args.jobs is None:
        args.jobs = 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"forge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"forge: stage {exc.stage} failed: {exc.detail}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    except ForgeError as exc:
        print(f"forge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
