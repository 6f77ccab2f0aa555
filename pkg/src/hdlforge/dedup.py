"""Exact-duplicate removal by content hash."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .model import SourceFile, Stage, StageReport

log = logging.getLogger(__name__)


def compute_content_hash(content: bytes) -> str:
    # identity key for grouping, not a security boundary
    return hashlib.md5(content).hexdigest()


@dataclass
class HashGroup:
    digest: str
    members: list[str]  # canonical order; survivor first

    @property
    def survivor(self) -> str:
        return self.members[0]


def path_priority(path: str) -> tuple[int, str]:
    """Shorter paths win; equal lengths fall back to lexicographic order."""
    return (len(path), path)


def group_by_hash(files: Iterable[SourceFile], verify: bool = True, jobs: int = 1) -> list[HashGroup]:
    files = list(files)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        digests = list(pool.map(lambda f: compute_content_hash(f.content), files))
    buckets: dict[str, list[SourceFile]] = {}
    for f, d in zip(files, digests):
        buckets.setdefault(d, []).append(f)
    groups = []
    for digest, members in buckets.items():
        if verify and len(members) > 1:
            # split on real byte differences in case of a hash collision
            by_bytes: dict[bytes, list[SourceFile]] = {}
            for m in members:
                by_bytes.setdefault(m.content, []).append(m)
            parts = sorted(by_bytes.values(), key=lambda p: min(path_priority(m.path) for m in p))
        else:
            parts = [members]
        for i, part in enumerate(parts):
            paths = sorted((m.path for m in part), key=path_priority)
            tag = digest if len(parts) == 1 else f"{digest}~{i}"
            groups.append(HashGroup(tag, paths))
    groups.sort(key=lambda g: path_priority(g.survivor))
    return groups


def deduplicate(
    files: Iterable[SourceFile],
    out_dir: Optional[Union[str, os.PathLike]] = None,
    src_root: Optional[Union[str, os.PathLike]] = None,
    verify: bool = True,
    jobs: int = 1,
) -> tuple[list[SourceFile], StageReport]:
    survivors, report, _ = deduplicate_groups(files, out_dir, src_root, verify, jobs)
    return survivors, report


def deduplicate_groups(
    files: Iterable[SourceFile],
    out_dir: Optional[Union[str, os.PathLike]] = None,
    src_root: Optional[Union[str, os.PathLike]] = None,
    verify: bool = True,
    jobs: int = 1,
) -> tuple[list[SourceFile], StageReport, list[HashGroup]]:
    """Keep one file per distinct content.

    When ``out_dir`` is given, survivors are copied there under their
    relative path. With ``src_root`` the copy preserves modification time
    and permissions of the original file.
    """
    files = list(files)
    by_path = {f.path: f for f in files}
    report = StageReport(
        Stage.DEDUP,
        input_count=len(files),
        input_bytes=sum(f.size for f in files),
    )
    groups = group_by_hash(files, verify=verify, jobs=jobs)
    survivors = []
    for g in groups:
        keep = by_path[g.survivor]
        survivors.append(keep)
        for dup in g.members[1:]:
            report.reject(dup, f"duplicate of {g.survivor}")
    survivors.sort(key=lambda f: f.path)
    report.output_count = len(survivors)
    report.output_bytes = sum(f.size for f in survivors)
    report.rejections.sort()

    if out_dir is not None:
        out = Path(out_dir)

        def copy(f: SourceFile) -> Optional[tuple[str, str]]:
            target = out / f.path
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                if src_root is not None:
                    shutil.copy2(Path(src_root) / f.path, target)
                else:
                    target.write_bytes(f.content)
            except OSError as exc:
                return (f.path, f"IoError: {exc}")
            return None

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for err in pool.map(copy, survivors):
                if err:
                    report.flags.append(err)
                    log.error("copy failed for %s: %s", *err)
    return survivors, report, groups


def groups_report(groups: list[HashGroup]) -> dict:
    """``{digest: {"survivor": path, "removed": [paths]}}`` for duplicated content only."""
    return {
        g.digest: {"survivor": g.survivor, "removed": g.members[1:]}
        for g in sorted(groups, key=lambda g: g.digest)
        if len(g.members) > 1
    }


def write_groups_report(groups: list[HashGroup], path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(groups_report(groups), indent=2) + "\n", encoding="utf-8")
