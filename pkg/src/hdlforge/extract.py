"""Turn synthesizable source files into module records."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional

from .describe import describe_with_fallback
from .errors import InvariantViolation, ParseError
from .lexical import estimate_tokens, extract_comments
from .model import ModuleRecord, SourceFile, Stage, StageReport, record_filename, serialize_record
from .verilog import find_modules, parse_ports

log = logging.getLogger(__name__)


def extract_file(
    file: SourceFile, client=None, env: Optional[dict] = None
) -> tuple[list[ModuleRecord], list[tuple[str, str, int]]]:
    """Records for every module in a file plus (where, reason, bytes) rejections."""
    text = file.text
    try:
        spans = find_modules(text)
    except ParseError as exc:
        return [], [(file.path, f"{type(exc).__name__}: {exc}", file.size)]
    records, rejected = [], []
    for span in spans:
        code = text[span.start:span.end]
        where = f"{file.path}::{span.name}"
        try:
            ports = parse_ports(code, env)
            description, source = describe_with_fallback(client, span.name, ports, code)
            record = ModuleRecord(
                module_name=span.name,
                ports=ports,
                comments=extract_comments(code),
                verilog_code=code,
                token_count=estimate_tokens(code),
                description=description,
                description_source=source,
            )
            record.validate()
        except (ParseError, InvariantViolation) as exc:
            rejected.append((where, f"{type(exc).__name__}: {exc}", len(code.encode())))
            continue
        records.append(record)
    return records, rejected


def extract_project(
    files: Iterable[SourceFile], client=None, env: Optional[dict] = None, jobs: int = 1
) -> tuple[list[ModuleRecord], StageReport]:
    """Extract all files; output order is (path, position in file).

    The report counts module candidates and their code bytes, so it can be
    carried into database validation.
    """
    ordered = sorted(files, key=lambda f: f.path)
    report = StageReport(Stage.DB_VALIDATION)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda f: extract_file(f, client, env), ordered))
    records: list[ModuleRecord] = []
    for file, (recs, rejected) in zip(ordered, results):
        for rec in recs:
            size = len(rec.verilog_code.encode())
            report.input_count += 1
            report.input_bytes += size
            report.output_count += 1
            report.output_bytes += size
            records.append(rec)
        for where, reason, size in rejected:
            report.input_count += 1
            report.input_bytes += size
            report.reject(where, reason)
            log.info("extract reject %s: %s", where, reason)
    return records, report


def write_records(records: Iterable[ModuleRecord], out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    taken = {p.name for p in out.glob("*.json")}
    written = []
    for rec in records:
        path = out / record_filename(rec.module_name, taken)
        path.write_text(serialize_record(rec) + "\n", encoding="utf-8")
        written.append(path)
    return written
