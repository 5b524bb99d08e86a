"""Embedded relational store behind a narrow handle.

Everything the gateway persists lives here: one table per CIM class, three
bookkeeping tables (catalog, element index, per-attribute sync state) and a
``_synced_at`` freshness column the sync loop stamps on every live write.
A single connection guarded by a lock is plenty at gateway scale and gives
readers a consistent pre- or post-migration view for free.
"""
from __future__ import annotations

import sqlite3
import threading
from contextlib import contextmanager
from typing import Dict, List, Optional, Tuple

from .cim_library import PrimitiveKind, parse_literal
from .errors import StorageFailure
from .schema_synth import KEY_COLUMN, ColumnKind, ColumnSpec, StorageCatalog, TableSpec

SYNCED_AT_COLUMN = "_synced_at"

_SQL_TYPES = {
    ColumnKind.TEXT: "TEXT",
    ColumnKind.REAL: "REAL",
    ColumnKind.INTEGER: "INTEGER",
    ColumnKind.BOOLEAN: "INTEGER",
    ColumnKind.TIMESTAMP: "TEXT",
    ColumnKind.REFERENCE: "TEXT",
}

_COLUMN_PRIMITIVES = {
    ColumnKind.TEXT: PrimitiveKind.STRING,
    ColumnKind.REAL: PrimitiveKind.FLOAT,
    ColumnKind.INTEGER: PrimitiveKind.INTEGER,
    ColumnKind.BOOLEAN: PrimitiveKind.BOOLEAN,
}


def _quote(identifier: str) -> str:
    return '"' + identifier.replace('"', '""') + '"'


def coerce_value(kind: ColumnKind, literal: Optional[str]):
    """Best-effort coercion of a document literal into a column value.

    A literal that does not parse keeps its raw string form; sqlite stores it
    anyway and validation has already reported the violation, so nothing is
    silently dropped.
    """
    if literal is None:
        return None
    primitive = _COLUMN_PRIMITIVES.get(kind)
    if primitive is None:  # Timestamp and Reference stay textual
        return literal
    try:
        value = parse_literal(primitive, literal)
    except ValueError:
        return literal
    if isinstance(value, bool):
        return int(value)
    return value


class SqliteStore:
    """Narrow storage handle: DDL, row upserts, live-value and sync state."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.isolation_level = None  # explicit transactions only
        self._conn.row_factory = sqlite3.Row
        self._ensure_bookkeeping()

    def _ensure_bookkeeping(self):
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS _catalog (id INTEGER PRIMARY KEY CHECK (id = 1), body TEXT NOT NULL)"
            )
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS _meta (key TEXT PRIMARY KEY, value TEXT NOT NULL)"
            )
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS _elements ("
                "mrid TEXT PRIMARY KEY, class_name TEXT NOT NULL, ingested_at TEXT NOT NULL)"
            )
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS _sync_state ("
                "mrid TEXT NOT NULL, attribute TEXT NOT NULL, value, "
                "updated_at TEXT, quality TEXT NOT NULL, "
                "PRIMARY KEY (mrid, attribute))"
            )

    def close(self):
        with self._lock:
            self._conn.close()

    @contextmanager
    def transaction(self):
        """All-or-nothing scope for schema changes and row loads."""
        with self._lock:
            started = not self._conn.in_transaction
            try:
                if started:
                    self._conn.execute("BEGIN IMMEDIATE")
                yield
                if started:
                    self._conn.execute("COMMIT")
            except Exception as exc:
                if started and self._conn.in_transaction:
                    self._conn.execute("ROLLBACK")
                if isinstance(exc, StorageFailure):
                    raise
                raise StorageFailure(str(exc)) from exc

    def _execute(self, sql: str, params: Tuple = ()):
        with self._lock:
            try:
                return self._conn.execute(sql, params)
            except sqlite3.Error as exc:
                raise StorageFailure(f"{exc} (sql: {sql})") from exc

    # --- metadata ----------------------------------------------------------

    def meta_get(self, key: str) -> Optional[str]:
        row = self._execute("SELECT value FROM _meta WHERE key = ?", (key,)).fetchone()
        return row["value"] if row is not None else None

    def meta_set(self, key: str, value: str):
        self._execute(
            "INSERT INTO _meta (key, value) VALUES (?, ?) "
            "ON CONFLICT (key) DO UPDATE SET value = excluded.value",
            (key, value),
        )

    # --- catalog ---------------------------------------------------------

    def current_catalog(self) -> Optional[StorageCatalog]:
        row = self._execute("SELECT body FROM _catalog WHERE id = 1").fetchone()
        if row is None:
            return None
        return StorageCatalog.from_json(row["body"])

    def save_catalog(self, catalog: StorageCatalog):
        self._execute(
            "INSERT INTO _catalog (id, body) VALUES (1, ?) "
            "ON CONFLICT (id) DO UPDATE SET body = excluded.body",
            (catalog.to_json(),),
        )

    # --- DDL --------------------------------------------------------------

    def create_table(self, spec: TableSpec):
        cols = []
        for col in spec.columns:
            decl = f"{_quote(col.name)} {_SQL_TYPES[col.kind]}"
            if col.name == KEY_COLUMN:
                decl += " NOT NULL PRIMARY KEY"
            cols.append(decl)
        cols.append(f"{_quote(SYNCED_AT_COLUMN)} TEXT")
        self._execute(f"CREATE TABLE {_quote(spec.name)} ({', '.join(cols)})")

    def add_column(self, table: str, col: ColumnSpec):
        self._execute(
            f"ALTER TABLE {_quote(table)} ADD COLUMN {_quote(col.name)} {_SQL_TYPES[col.kind]}"
        )

    def drop_column(self, table: str, column: str):
        self._execute(f"ALTER TABLE {_quote(table)} DROP COLUMN {_quote(column)}")

    def drop_table(self, table: str):
        self._execute(f"DROP TABLE IF EXISTS {_quote(table)}")

    def reset_bookkeeping(self):
        self._execute("DELETE FROM _elements")
        self._execute("DELETE FROM _sync_state")

    # --- rows --------------------------------------------------------------

    def upsert_row(self, table: str, mrid: str, values: Dict[str, object]):
        names = [KEY_COLUMN] + list(values)
        placeholders = ", ".join("?" for _ in names)
        updates = ", ".join(f"{_quote(n)} = excluded.{_quote(n)}" for n in values) or f"{_quote(KEY_COLUMN)} = excluded.{_quote(KEY_COLUMN)}"
        self._execute(
            f"INSERT INTO {_quote(table)} ({', '.join(_quote(n) for n in names)}) "
            f"VALUES ({placeholders}) ON CONFLICT ({_quote(KEY_COLUMN)}) DO UPDATE SET {updates}",
            tuple([mrid] + [values[n] for n in values]),
        )

    def delete_row(self, table: str, mrid: str):
        self._execute(f"DELETE FROM {_quote(table)} WHERE {_quote(KEY_COLUMN)} = ?", (mrid,))

    def read_row(self, table: str, mrid: str) -> Optional[Dict[str, object]]:
        row = self._execute(
            f"SELECT * FROM {_quote(table)} WHERE {_quote(KEY_COLUMN)} = ?", (mrid,)
        ).fetchone()
        return dict(row) if row is not None else None

    def row_mrids(self, table: str) -> List[str]:
        rows = self._execute(f"SELECT {_quote(KEY_COLUMN)} FROM {_quote(table)}").fetchall()
        return [r[KEY_COLUMN] for r in rows]

    # --- element index ------------------------------------------------------

    def set_element(self, mrid: str, class_name: str, ingested_at: str):
        self._execute(
            "INSERT INTO _elements (mrid, class_name, ingested_at) VALUES (?, ?, ?) "
            "ON CONFLICT (mrid) DO UPDATE SET class_name = excluded.class_name, "
            "ingested_at = excluded.ingested_at",
            (mrid, class_name, ingested_at),
        )

    def remove_element(self, mrid: str):
        self._execute("DELETE FROM _elements WHERE mrid = ?", (mrid,))
        self._execute("DELETE FROM _sync_state WHERE mrid = ?", (mrid,))

    def element_class(self, mrid: str) -> Optional[Tuple[str, str]]:
        row = self._execute(
            "SELECT class_name, ingested_at FROM _elements WHERE mrid = ?", (mrid,)
        ).fetchone()
        return (row["class_name"], row["ingested_at"]) if row is not None else None

    def element_mrids(self) -> List[str]:
        return [r["mrid"] for r in self._execute("SELECT mrid FROM _elements").fetchall()]

    # --- live values ----------------------------------------------------------

    def write_live(self, table: str, mrid: str, column: str, value, updated_at: str):
        """One Good sample: row column, per-row freshness stamp, sync state."""
        with self._lock:
            self._execute(
                f"UPDATE {_quote(table)} SET {_quote(column)} = ?, "
                f"{_quote(SYNCED_AT_COLUMN)} = ? WHERE {_quote(KEY_COLUMN)} = ?",
                (value, updated_at, mrid),
            )
            self._execute(
                "INSERT INTO _sync_state (mrid, attribute, value, updated_at, quality) "
                "VALUES (?, ?, ?, ?, 'Good') ON CONFLICT (mrid, attribute) DO UPDATE SET "
                "value = excluded.value, updated_at = excluded.updated_at, quality = 'Good'",
                (mrid, column, value, updated_at),
            )

    def mark_quality(self, mrid: str, attribute: str, quality: str):
        self._execute(
            "INSERT INTO _sync_state (mrid, attribute, value, updated_at, quality) "
            "VALUES (?, ?, NULL, NULL, ?) ON CONFLICT (mrid, attribute) DO UPDATE SET "
            "quality = excluded.quality",
            (mrid, attribute, quality),
        )

    def sync_entries(self, mrid: str) -> Dict[str, Tuple[object, Optional[str], str]]:
        rows = self._execute(
            "SELECT attribute, value, updated_at, quality FROM _sync_state WHERE mrid = ?",
            (mrid,),
        ).fetchall()
        return {r["attribute"]: (r["value"], r["updated_at"], r["quality"]) for r in rows}

    def quality_of(self, mrid: str, attribute: str) -> Optional[str]:
        row = self._execute(
            "SELECT quality FROM _sync_state WHERE mrid = ? AND attribute = ?",
            (mrid, attribute),
        ).fetchone()
        return row["quality"] if row is not None else None

    # --- introspection (tests, drift checks against reality) -------------------

    def structure(self) -> Dict[str, List[str]]:
        """Managed table -> column names, straight from sqlite."""
        catalog = self.current_catalog()
        names = list(catalog.tables) if catalog else []
        out: Dict[str, List[str]] = {}
        for name in names:
            rows = self._execute(f"PRAGMA table_info({_quote(name)})").fetchall()
            out[name] = [r["name"] for r in rows if r["name"] != SYNCED_AT_COLUMN]
        return out
