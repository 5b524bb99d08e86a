"""Storage schema synthesis: one table per CIM class present in the topology.

Planning reconciles three inputs: the topology (which classes and reference
roles actually occur), the class library (which attributes each class has and
their kinds) and the persisted catalog (what storage currently looks like).
A library version change supersedes incremental reconciliation entirely and
forces a full re-initialization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .cim_library import CimLibrary, PrimitiveKind, resolve_attributes, resolve_type
from .errors import StorageFailure, UnknownClass
from .rdf_topology import TopologyDocument


class ColumnKind(Enum):
    TEXT = "Text"
    REAL = "Real"
    INTEGER = "Integer"
    BOOLEAN = "Boolean"
    TIMESTAMP = "Timestamp"
    REFERENCE = "Reference"

    def __str__(self):
        return self.value


_PRIMITIVE_COLUMNS = {
    PrimitiveKind.FLOAT: ColumnKind.REAL,
    PrimitiveKind.INTEGER: ColumnKind.INTEGER,
    PrimitiveKind.BOOLEAN: ColumnKind.BOOLEAN,
    PrimitiveKind.STRING: ColumnKind.TEXT,
    PrimitiveKind.DATETIME: ColumnKind.TIMESTAMP,
}


def map_primitive(kind: PrimitiveKind) -> ColumnKind:
    """Total mapping from primitive kinds to storage column kinds."""
    return _PRIMITIVE_COLUMNS[kind]


KEY_COLUMN = "mrid"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind
    nullable: bool = True


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: Tuple[ColumnSpec, ...]

    def column_names(self) -> List[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Optional[ColumnSpec]:
        for c in self.columns:
            if c.name == name:
                return c
        return None


def key_column() -> ColumnSpec:
    return ColumnSpec(KEY_COLUMN, ColumnKind.TEXT, nullable=False)


@dataclass
class StorageCatalog:
    tables: Dict[str, TableSpec]
    library_version: str

    @classmethod
    def empty(cls, library_version: str) -> "StorageCatalog":
        return cls(tables={}, library_version=library_version)

    def to_json(self) -> str:
        body = {
            "library_version": self.library_version,
            "tables": [
                {
                    "name": spec.name,
                    "columns": [
                        {"name": c.name, "kind": c.kind.value, "nullable": c.nullable}
                        for c in spec.columns
                    ],
                }
                for _, spec in sorted(self.tables.items())
            ],
        }
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StorageCatalog":
        body = json.loads(text)
        tables = {}
        for t in body["tables"]:
            columns = tuple(
                ColumnSpec(c["name"], ColumnKind(c["kind"]), c["nullable"]) for c in t["columns"]
            )
            tables[t["name"]] = TableSpec(t["name"], columns)
        return cls(tables=tables, library_version=body["library_version"])


@dataclass
class SchemaDiff:
    create_tables: List[TableSpec] = field(default_factory=list)
    add_columns: List[Tuple[str, ColumnSpec]] = field(default_factory=list)
    drop_columns: List[Tuple[str, ColumnSpec]] = field(default_factory=list)
    drop_tables: List[str] = field(default_factory=list)
    requires_reinit: bool = False
    new_library_version: Optional[str] = None

    def is_empty(self) -> bool:
        return not (
            self.create_tables
            or self.add_columns
            or self.drop_columns
            or self.drop_tables
            or self.requires_reinit
        )

    def summary(self) -> Dict[str, int]:
        return {
            "create_tables": len(self.create_tables),
            "add_columns": len(self.add_columns),
            "drop_columns": len(self.drop_columns),
            "drop_tables": len(self.drop_tables),
            "requires_reinit": int(self.requires_reinit),
        }


@dataclass
class DriftReport:
    missing_attributes: List[Tuple[str, str]] = field(default_factory=list)
    redundant_attributes: List[Tuple[str, str]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.missing_attributes or self.redundant_attributes)


def doc_reference_roles(doc: TopologyDocument) -> Dict[str, Set[str]]:
    """Reference roles actually used in the document, per source class."""
    roles: Dict[str, Set[str]] = {}
    for edge in doc.edges:
        source = doc.elements.get(edge.source)
        if source is not None:
            roles.setdefault(source.class_name, set()).add(edge.role)
    return roles


def table_spec_for(lib: CimLibrary, class_name: str, roles: Iterable[str] = ()) -> TableSpec:
    """Column layout for one class table.

    The mRID attribute folds into the key column; remaining attributes keep
    resolution order; reference roles come last as nullable Reference columns
    holding the target mRID.
    """
    columns: List[ColumnSpec] = [key_column()]
    taken = {KEY_COLUMN}
    for attr in resolve_attributes(lib, class_name):
        if attr.name.lower() == KEY_COLUMN:
            continue
        kind = map_primitive(resolve_type(lib, attr))
        columns.append(ColumnSpec(attr.name, kind, nullable=attr.multiplicity != "one"))
        taken.add(attr.name)
    for role in sorted(roles):
        if role not in taken:
            columns.append(ColumnSpec(role, ColumnKind.REFERENCE, nullable=True))
    return TableSpec(class_name, tuple(columns))


def _wanted_tables(doc: TopologyDocument, lib: CimLibrary) -> Dict[str, TableSpec]:
    roles = doc_reference_roles(doc)
    wanted = {}
    for class_name in sorted(doc.class_names()):
        if class_name not in lib.classes:
            raise UnknownClass(class_name)
        wanted[class_name] = table_spec_for(lib, class_name, roles.get(class_name, ()))
    return wanted


def plan_schema(
    doc: TopologyDocument,
    lib: CimLibrary,
    catalog: StorageCatalog,
    include_drops: bool = True,
) -> SchemaDiff:
    """Plan the table/column actions reconciling storage with doc + library.

    A library version mismatch yields requires_reinit with no other actions.
    Columns are compared by (name, kind): a retyped attribute plans as drop
    plus add.  With include_drops off, shrink is left to drift reporting,
    which is the gateway's default posture.
    """
    if lib.version != catalog.library_version:
        return SchemaDiff(requires_reinit=True, new_library_version=lib.version)

    wanted = _wanted_tables(doc, lib)
    diff = SchemaDiff()
    for name in sorted(wanted):
        spec = wanted[name]
        have = catalog.tables.get(name)
        if have is None:
            diff.create_tables.append(spec)
            continue
        have_cols = {(c.name, c.kind) for c in have.columns}
        want_cols = {(c.name, c.kind) for c in spec.columns}
        for col in spec.columns:
            if (col.name, col.kind) not in have_cols:
                diff.add_columns.append((name, col))
        if include_drops:
            for col in have.columns:
                if (col.name, col.kind) not in want_cols and col.name != KEY_COLUMN:
                    diff.drop_columns.append((name, col))
    if include_drops:
        diff.drop_tables = sorted(set(catalog.tables) - set(wanted))
    return diff


def apply_schema(diff: SchemaDiff, store) -> StorageCatalog:
    """Execute a planned diff against the store; returns the updated catalog.

    Atomic: on failure the previous catalog (and storage structure) remains
    in force.  A reinit drops every managed table and resets the catalog to
    empty at the new library version; recreating tables is a fresh plan+apply
    round against that emptied catalog.
    """
    catalog = store.current_catalog()
    if catalog is None:
        catalog = StorageCatalog.empty(diff.new_library_version or "")

    if diff.requires_reinit:
        if diff.new_library_version is None:
            raise StorageFailure("reinit diff carries no target library version")
        with store.transaction():
            for name in list(catalog.tables):
                store.drop_table(name)
            store.reset_bookkeeping()
            catalog = StorageCatalog.empty(diff.new_library_version)
            store.save_catalog(catalog)
        return catalog

    with store.transaction():
        tables = dict(catalog.tables)
        for spec in diff.create_tables:
            store.create_table(spec)
            tables[spec.name] = spec
        # drops run before adds so a retyped column (same name, new kind)
        # never collides with its old incarnation
        for table, col in diff.drop_columns:
            store.drop_column(table, col.name)
            spec = tables[table]
            tables[table] = TableSpec(
                table, tuple(c for c in spec.columns if not (c.name == col.name and c.kind == col.kind))
            )
        for table, col in diff.add_columns:
            store.add_column(table, col)
            spec = tables[table]
            tables[table] = TableSpec(table, spec.columns + (col,))
        for table in diff.drop_tables:
            store.drop_table(table)
            tables.pop(table, None)
        catalog = StorageCatalog(tables=tables, library_version=catalog.library_version)
        store.save_catalog(catalog)
    return catalog


def migrate(doc: TopologyDocument, lib: CimLibrary, store, include_drops: bool = True):
    """Plan and apply, following the reinit path through to rebuilt tables.

    Returns (catalog, applied_diff, reinitialized).  After a version change
    the first apply only clears storage; the rebuild is the second plan
    against the emptied catalog, so the returned diff describes the tables
    actually created.
    """
    catalog = store.current_catalog()
    if catalog is None:
        catalog = StorageCatalog.empty(lib.version)
        store.save_catalog(catalog)
    diff = plan_schema(doc, lib, catalog, include_drops=include_drops)
    reinitialized = False
    if diff.requires_reinit:
        apply_schema(diff, store)
        reinitialized = True
        diff = plan_schema(doc, lib, store.current_catalog(), include_drops=include_drops)
    catalog = apply_schema(diff, store)
    return catalog, diff, reinitialized


def detect_drift(catalog: StorageCatalog, doc: TopologyDocument, lib: CimLibrary) -> DriftReport:
    """Missing vs redundant attributes between storage and doc + library.

    Missing: a wanted column (resolved attribute or document reference role)
    with no backing column of the right kind, including every column of an
    absent table.  Redundant: a column whose name backs nothing wanted,
    including every column of a table whose class left the topology.  A
    kind mismatch counts as missing only, keeping the two lists disjoint.
    """
    report = DriftReport()
    wanted = _wanted_tables(doc, lib)
    for name in sorted(wanted):
        spec = wanted[name]
        have = catalog.tables.get(name)
        if have is None:
            report.missing_attributes.extend((name, c.name) for c in spec.columns)
            continue
        have_by_name = {c.name: c for c in have.columns}
        wanted_names = {c.name for c in spec.columns}
        for col in spec.columns:
            backing = have_by_name.get(col.name)
            if backing is None or backing.kind != col.kind:
                report.missing_attributes.append((name, col.name))
        for col in have.columns:
            if col.name not in wanted_names:
                report.redundant_attributes.append((name, col.name))
    for name in sorted(set(catalog.tables) - set(wanted)):
        report.redundant_attributes.extend((name, c.name) for c in catalog.tables[name].columns)
    return report
