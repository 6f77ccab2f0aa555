"""Relational store for module records and their ports.

The schema mirrors a two-table layout (modules, ports) and doubles as the
final validation gate: a record is inserted atomically or not at all.
Backed by SQLAlchemy, so the default file-backed SQLite store and a
server database (``postgresql://...``) share one code path.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import sqlalchemy as sa
from sqlalchemy.exc import IntegrityError, OperationalError, SQLAlchemyError

from .errors import ForgeError, StoreUnavailable
from .model import ModuleRecord, PortSpec, Unresolved, record_from_dict, record_to_dict

log = logging.getLogger(__name__)

DEFAULT_PORTLESS_EXEMPT = ("filler", "decap", "wrapper_empty")

metadata = sa.MetaData()

verilog_modules = sa.Table(
    "verilog_modules",
    metadata,
    sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
    sa.Column("module_name", sa.Text, nullable=False),
    sa.Column("verilog_code", sa.Text, nullable=False, unique=True),
    sa.Column("description", sa.Text, nullable=False),
    sa.Column("comments", sa.Text),
    sa.Column("token_count", sa.Integer),
    sa.Column("extracted_at", sa.DateTime, server_default=sa.func.current_timestamp()),
    sqlite_autoincrement=True,
)

module_ports = sa.Table(
    "module_ports",
    metadata,
    sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
    sa.Column("module_id", sa.Integer, sa.ForeignKey("verilog_modules.id", ondelete="CASCADE")),
    sa.Column("port_name", sa.Text, nullable=False),
    sa.Column(
        "port_type",
        sa.Text,
        sa.CheckConstraint("port_type IN ('input', 'output', 'inout')", name="port_type_check"),
        nullable=False,
    ),
    sa.Column("port_width", sa.Integer),
    sa.UniqueConstraint("module_id", "port_name", name="unique_port"),
    sqlite_autoincrement=True,
)


@dataclass(frozen=True)
class Inserted:
    id: int


@dataclass(frozen=True)
class Rejected:
    reason: str


@dataclass
class ModuleQuery:
    name_pattern: Optional[str] = None
    min_tokens: Optional[int] = None
    max_tokens: Optional[int] = None
    min_ports: Optional[int] = None
    max_ports: Optional[int] = None
    has_comments: Optional[bool] = None


def resolve_url(url: Optional[str] = None) -> str:
    url = url or os.environ.get("FORGE_DB_URL")
    if not url:
        raise StoreUnavailable("no store configured (pass a URL or set FORGE_DB_URL)")
    if "://" not in url:
        url = f"sqlite:///{url}"
    return url


def _enable_sqlite_fk(dbapi_conn, _record) -> None:
    cur = dbapi_conn.cursor()
    cur.execute("PRAGMA foreign_keys=ON")
    cur.close()


def portless_exempt(name: str, exemptions: Sequence[str] = DEFAULT_PORTLESS_EXEMPT) -> bool:
    lowered = name.lower()
    return any(e.lower() in lowered for e in exemptions)


def validation_reason(record: ModuleRecord, exemptions: Sequence[str] = DEFAULT_PORTLESS_EXEMPT) -> Optional[str]:
    """Why a record may not enter the store, or None. Uniqueness is the store's job."""
    if not record.module_name:
        return "missing module_name"
    if not record.verilog_code:
        return "missing verilog_code"
    if not record.description:
        return "missing description"
    if not record.ports and not portless_exempt(record.module_name, exemptions):
        return "no ports captured"
    unresolved = [p.name for p in record.ports if isinstance(p.bit_width, Unresolved)]
    if unresolved:
        return f"unresolved width: {', '.join(unresolved)}"
    names = [p.name for p in record.ports]
    if len(names) != len(set(names)):
        return "duplicate port names"
    return None


class ModuleStore:
    def __init__(self, url: Optional[str] = None, portless_exemptions: Sequence[str] = DEFAULT_PORTLESS_EXEMPT):
        self.url = resolve_url(url)
        self.portless_exemptions = tuple(portless_exemptions)
        try:
            self.engine = sa.create_engine(self.url, future=True)
        except (SQLAlchemyError, ImportError) as exc:
            raise StoreUnavailable(str(exc)) from exc
        if self.engine.dialect.name == "sqlite":
            sa.event.listen(self.engine, "connect", _enable_sqlite_fk)
            sa.event.listen(
                self.engine, "connect", lambda c, _r: c.execute("PRAGMA busy_timeout=30000")
            )

    def close(self) -> None:
        self.engine.dispose()

    def __enter__(self) -> "ModuleStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def init_schema(self) -> None:
        """Create both tables if missing; safe to call repeatedly."""
        try:
            metadata.create_all(self.engine)
        except OperationalError as exc:
            raise StoreUnavailable(str(exc.orig)) from exc

    def insert_record(self, record: ModuleRecord) -> Union[Inserted, Rejected]:
        reason = validation_reason(record, self.portless_exemptions)
        if reason:
            return Rejected(reason)
        try:
            with self.engine.begin() as conn:
                module_id = conn.execute(
                    verilog_modules.insert().values(
                        module_name=record.module_name,
                        verilog_code=record.verilog_code,
                        description=record.description,
                        comments="\n".join(record.comments) if record.comments else None,
                        token_count=record.token_count,
                    )
                ).inserted_primary_key[0]
                if record.ports:
                    conn.execute(
                        module_ports.insert(),
                        [
                            {
                                "module_id": module_id,
                                "port_name": p.name,
                                "port_type": p.direction,
                                "port_width": p.bit_width,
                            }
                            for p in record.ports
                        ],
                    )
        except IntegrityError as exc:
            msg = str(exc.orig).lower()
            if "verilog_code" in msg:
                return Rejected("duplicate verilog_code")
            if "unique_port" in msg or "port_name" in msg:
                return Rejected("duplicate port names")
            return Rejected(f"constraint violation: {exc.orig}")
        except OperationalError as exc:
            raise StoreUnavailable(str(exc.orig)) from exc
        return Inserted(int(module_id))

    def count(self) -> tuple[int, int]:
        with self.engine.connect() as conn:
            modules = conn.execute(sa.select(sa.func.count()).select_from(verilog_modules)).scalar_one()
            ports = conn.execute(sa.select(sa.func.count()).select_from(module_ports)).scalar_one()
        return modules, ports

    def delete_module(self, module_id: int) -> None:
        with self.engine.begin() as conn:
            conn.execute(verilog_modules.delete().where(verilog_modules.c.id == module_id))

    def query_modules(self, query: Optional[ModuleQuery] = None) -> list[tuple[int, ModuleRecord]]:
        """(id, record) pairs matching the filter, ordered by id."""
        q = query or ModuleQuery()
        m = verilog_modules.c
        port_count = (
            sa.select(sa.func.count())
            .select_from(module_ports)
            .where(module_ports.c.module_id == m.id)
            .scalar_subquery()
        )
        stmt = sa.select(verilog_modules).order_by(m.id)
        if q.name_pattern:
            stmt = stmt.where(m.module_name.contains(q.name_pattern, autoescape=True))
        if q.min_tokens is not None:
            stmt = stmt.where(m.token_count >= q.min_tokens)
        if q.max_tokens is not None:
            stmt = stmt.where(m.token_count <= q.max_tokens)
        if q.min_ports is not None:
            stmt = stmt.where(port_count >= q.min_ports)
        if q.max_ports is not None:
            stmt = stmt.where(port_count <= q.max_ports)
        if q.has_comments is True:
            stmt = stmt.where(sa.and_(m.comments.is_not(None), m.comments != ""))
        elif q.has_comments is False:
            stmt = stmt.where(sa.or_(m.comments.is_(None), m.comments == ""))
        try:
            with self.engine.connect() as conn:
                rows = conn.execute(stmt).mappings().all()
                ids = [r["id"] for r in rows]
                ports: dict[int, list[PortSpec]] = {i: [] for i in ids}
                if ids:
                    for p in conn.execute(
                        sa.select(module_ports)
                        .where(module_ports.c.module_id.in_(ids))
                        .order_by(module_ports.c.id)
                    ).mappings():
                        ports[p["module_id"]].append(
                            PortSpec(p["port_name"], p["port_type"], p["port_width"])
                        )
        except OperationalError as exc:
            raise StoreUnavailable(str(exc.orig)) from exc
        return [
            (
                r["id"],
                ModuleRecord(
                    module_name=r["module_name"],
                    ports=ports[r["id"]],
                    comments=r["comments"].split("\n") if r["comments"] else [],
                    verilog_code=r["verilog_code"],
                    token_count=r["token_count"],
                    description=r["description"],
                ),
            )
            for r in rows
        ]

    def export_jsonl(self, path: Union[str, os.PathLike]) -> int:
        rows = self.query_modules()
        with open(path, "w", encoding="utf-8") as fh:
            for _, rec in rows:
                fh.write(json.dumps(record_to_dict(rec), ensure_ascii=False) + "\n")
        return len(rows)

    def import_jsonl(self, path: Union[str, os.PathLike]) -> tuple[int, int]:
        """(inserted, rejected); every line goes through full validation."""
        inserted = rejected = 0
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise ForgeError(f"IoError: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = record_from_dict(json.loads(line))
                except (ValueError, ForgeError) as exc:
                    log.info("import line %d rejected: %s", lineno, exc)
                    rejected += 1
                    continue
                if isinstance(self.insert_record(record), Inserted):
                    inserted += 1
                else:
                    rejected += 1
        return inserted, rejected


def insert_all(
    store: ModuleStore, records: Iterable[ModuleRecord]
) -> list[tuple[ModuleRecord, Union[Inserted, Rejected]]]:
    return [(rec, store.insert_record(rec)) for rec in records]


def default_store_path(work: Union[str, os.PathLike]) -> str:
    return str(Path(work) / "forge.db")
