"""Cloud-ID to local-tag mapping and the refresh-rate-driven sync loop.

The local node declares its intent in a manifest (tag -> mrid, attribute);
binding that against the current topology gives a bijection the sync loop
polls on a fixed period.  Quality is the smallest model that supports the
loop contract: Good (fresh sample), Stale (no fresh sample past threshold),
Bad (the source explicitly failed the tag).
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

from .cim_library import CimLibrary, resolve_attributes
from .datasource import ManifestEntry, TagReading
from .errors import (
    DuplicateTag,
    DuplicateTarget,
    FatalStoreFailure,
    SourceUnreachable,
    StorageFailure,
    UnknownMrid,
)
from .rdf_topology import TopologyDocument
from .schema_synth import KEY_COLUMN, ColumnKind
from .storage import SYNCED_AT_COLUMN, SqliteStore, coerce_value


class Quality(str, Enum):
    GOOD = "Good"
    STALE = "Stale"
    BAD = "Bad"


@dataclass(frozen=True)
class TagBinding:
    mrid: str
    attribute: str
    local_tag: str


@dataclass(frozen=True)
class MappingTable:
    bindings: Tuple[TagBinding, ...]
    unmapped_mrids: FrozenSet[str]
    unmapped_tags: FrozenSet[str]

    def tags(self) -> List[str]:
        return [b.local_tag for b in self.bindings]

    def by_tag(self, tag: str) -> Optional[TagBinding]:
        for b in self.bindings:
            if b.local_tag == tag:
                return b
        return None

    def binding_for(self, mrid: str, attribute: str) -> Optional[TagBinding]:
        for b in self.bindings:
            if b.mrid == mrid and b.attribute == attribute:
                return b
        return None


@dataclass(frozen=True)
class Sample:
    local_tag: str
    value: Optional[str]
    timestamp: str
    quality: Quality


@dataclass(frozen=True)
class RefreshPolicy:
    """Loop timing, in seconds."""

    period: float = 1.0
    staleness_threshold: float = 3.0
    jitter_tolerance: float = 0.25

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("refresh period must be positive")
        if self.staleness_threshold < self.period:
            raise ValueError("staleness threshold must be at least one period")


def build_mapping(doc: TopologyDocument, manifest: List[ManifestEntry], lib: CimLibrary) -> MappingTable:
    """Bind manifest entries against the document and library.

    An entry binds when its mRID is in the document and its attribute is a
    resolved attribute of the element's class.  Everything else lands in
    unmapped_tags.  unmapped_mrids lists elements that carry document
    attributes but gained no binding at all.
    """
    seen_tags = set()
    seen_targets = set()
    bindings: List[TagBinding] = []
    unmapped_tags = set()

    resolved_names: Dict[str, set] = {}

    def attribute_names(class_name: str) -> set:
        if class_name not in resolved_names:
            if class_name in lib.classes:
                resolved_names[class_name] = {a.name for a in resolve_attributes(lib, class_name)}
            else:
                resolved_names[class_name] = set()
        return resolved_names[class_name]

    for entry in manifest:
        if entry.tag in seen_tags:
            raise DuplicateTag(entry.tag)
        seen_tags.add(entry.tag)
        if (entry.mrid, entry.attribute) in seen_targets:
            raise DuplicateTarget(entry.mrid, entry.attribute)
        seen_targets.add((entry.mrid, entry.attribute))

        element = doc.elements.get(entry.mrid)
        if element is not None and entry.attribute in attribute_names(element.class_name):
            bindings.append(TagBinding(entry.mrid, entry.attribute, entry.tag))
        else:
            unmapped_tags.add(entry.tag)

    bound_mrids = {b.mrid for b in bindings}
    unmapped_mrids = {
        mrid
        for mrid, el in doc.elements.items()
        if el.attribute_values and mrid not in bound_mrids
    }
    return MappingTable(
        bindings=tuple(bindings),
        unmapped_mrids=frozenset(unmapped_mrids),
        unmapped_tags=frozenset(unmapped_tags),
    )


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def poll_once(source, mapping: MappingTable) -> List[Sample]:
    """One poll across all bound tags; unserved tags yield Bad, not omission."""
    if not mapping.bindings:
        return []
    readings = {r.tag: r for r in source.read_tags(mapping.tags())}
    samples = []
    for binding in mapping.bindings:
        reading = readings.get(binding.local_tag)
        if reading is not None and reading.ok:
            samples.append(
                Sample(binding.local_tag, reading.value, reading.timestamp or _now_iso(), Quality.GOOD)
            )
        else:
            samples.append(Sample(binding.local_tag, None, _now_iso(), Quality.BAD))
    return samples


class SyncLoop:
    """Polls the source every period and writes Good samples into storage.

    Sole writer of live-value columns.  Survives transient SourceUnreachable
    by skipping the tick; a storage failure is fatal and recorded as the
    exit cause.  Emits events through the optional callback: staleness
    transitions, unreachable ticks, fatal exit.
    """

    def __init__(
        self,
        source,
        mapping: MappingTable,
        policy: RefreshPolicy,
        store: SqliteStore,
        topology: TopologyDocument,
        on_event: Optional[Callable[[dict], None]] = None,
    ):
        self.source = source
        self.mapping = mapping
        self.policy = policy
        self.store = store
        self.on_event = on_event or (lambda event: None)
        self.exit_cause: Optional[BaseException] = None
        self.ticks = 0
        self._tables = {
            b.local_tag: topology.elements[b.mrid].class_name
            for b in mapping.bindings
            if b.mrid in topology.elements
        }
        catalog = store.current_catalog()
        self._column_kinds: Dict[str, ColumnKind] = {}
        for binding in mapping.bindings:
            table = self._tables.get(binding.local_tag)
            spec = catalog.tables.get(table) if catalog and table else None
            column = spec.column(binding.attribute) if spec else None
            self._column_kinds[binding.local_tag] = column.kind if column else ColumnKind.TEXT
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._last_good: Dict[str, float] = {}
        self._stale: set = set()

    # --- lifecycle -----------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self.run, name="sync-loop", daemon=True)
        self._thread.start()

    def stop(self, timeout: float = 5.0):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=timeout)

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    # --- loop ------------------------------------------------------------

    def run(self):
        started = time.monotonic()
        for binding in self.mapping.bindings:
            self._last_good.setdefault(binding.local_tag, started)
        next_tick = started
        while not self._stop.is_set():
            try:
                self.tick()
            except FatalStoreFailure as exc:
                self.exit_cause = exc
                self.on_event({"type": "sync-fatal", "detail": str(exc)})
                return
            next_tick += self.policy.period
            delay = next_tick - time.monotonic()
            if delay > 0:
                self._stop.wait(delay)
            else:
                # fell behind more than a period: resynchronize the grid
                next_tick = time.monotonic()

    def tick(self):
        self.ticks += 1
        try:
            samples = poll_once(self.source, self.mapping)
        except SourceUnreachable as exc:
            self.on_event({"type": "source-unreachable", "detail": str(exc)})
            samples = []
        try:
            self._write(samples)
            self._sweep_staleness()
        except StorageFailure as exc:
            raise FatalStoreFailure(str(exc)) from exc

    def _write(self, samples: List[Sample]):
        now = time.monotonic()
        for sample in samples:
            binding = self.mapping.by_tag(sample.local_tag)
            table = self._tables.get(sample.local_tag)
            if binding is None or table is None:
                continue
            if sample.quality is Quality.GOOD:
                kind = self._column_kinds.get(sample.local_tag, ColumnKind.TEXT)
                self.store.write_live(
                    table, binding.mrid, binding.attribute,
                    coerce_value(kind, sample.value), sample.timestamp,
                )
                self._last_good[sample.local_tag] = now
                self._stale.discard(sample.local_tag)
            else:
                self.store.mark_quality(binding.mrid, binding.attribute, Quality.BAD.value)

    def _sweep_staleness(self):
        now = time.monotonic()
        for binding in self.mapping.bindings:
            tag = binding.local_tag
            if tag in self._stale:
                continue
            if now - self._last_good.get(tag, now) > self.policy.staleness_threshold:
                current = self.store.quality_of(binding.mrid, binding.attribute)
                if current == Quality.BAD.value:
                    continue  # explicit per-tag failure outranks staleness
                self._stale.add(tag)
                self.store.mark_quality(binding.mrid, binding.attribute, Quality.STALE.value)
                self.on_event(
                    {
                        "type": "staleness",
                        "mrid": binding.mrid,
                        "attribute": binding.attribute,
                        "tag": tag,
                        "quality": Quality.STALE.value,
                    }
                )


@dataclass
class LiveValue:
    value: object
    timestamp: Optional[str]
    quality: Quality

    def as_dict(self) -> dict:
        return {"value": self.value, "timestamp": self.timestamp, "quality": self.quality.value}


def latest(store: SqliteStore, mrid: str) -> Dict[str, LiveValue]:
    """Most recent value per attribute for one element.

    Synced attributes carry the sync state's timestamp and quality; attributes
    never covered by a binding fall back to their topology-ingest value at
    quality Good.
    """
    located = store.element_class(mrid)
    if located is None:
        raise UnknownMrid(mrid)
    class_name, ingested_at = located
    row = store.read_row(class_name, mrid) or {}
    synced = store.sync_entries(mrid)

    catalog = store.current_catalog()
    table = catalog.tables.get(class_name) if catalog else None
    reference_columns = {
        c.name for c in (table.columns if table else ()) if c.kind is ColumnKind.REFERENCE
    }

    values: Dict[str, LiveValue] = {}
    for column, value in row.items():
        if column in (KEY_COLUMN, SYNCED_AT_COLUMN) or column in reference_columns:
            continue
        if column in synced:
            continue
        if value is not None:
            values[column] = LiveValue(value, ingested_at, Quality.GOOD)
    for attribute, (value, updated_at, quality) in synced.items():
        if value is None and attribute in row and row[attribute] is not None:
            value = row[attribute]  # Bad/Stale marks keep the last known value
        values[attribute] = LiveValue(value, updated_at or ingested_at, Quality(quality))
    return values
