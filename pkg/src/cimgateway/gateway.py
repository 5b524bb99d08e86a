"""The cloud-side SCADA gateway.

On every topology ingest the gateway runs one pipeline: parse the RDF,
validate against the class library, plan and apply the storage schema, load
static rows, rebuild the tag mapping, restart the sync loop, then publish a
new generation.  The pipeline is all-or-nothing: any stage failure leaves
the previous generation fully serving.  Reads always see one consistent
state snapshot; reloads serialize behind a single lock.
"""
from __future__ import annotations

import hashlib
import itertools
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from queue import Queue
from typing import Dict, List, Optional, Tuple

from .cim_library import CimLibrary, lineage, literal_conforms, resolve_attributes, resolve_type
from .datasource import ManifestEntry
from .errors import (
    GatewayError,
    MalformedXml,
    MappingFailed,
    MigrationFailed,
    NotReady,
    NotWritable,
    ParseFailed,
    PipelineError,
    SourceRejected,
    SourceUnreachable,
    StorageFailure,
    SyncRestartFailed,
    TopologyError,
    TypeMismatch,
    Unauthorized,
    UnknownClass,
    UnknownMrid,
    ValidationFatal,
)
from .id_sync import MappingTable, RefreshPolicy, SyncLoop, build_mapping, latest
from .rdf_topology import TopologyDocument, ValidationReport, parse_topology, validate
from .schema_synth import SchemaDiff, StorageCatalog, apply_schema, plan_schema
from .storage import SqliteStore, coerce_value


@dataclass(frozen=True)
class UiDevice:
    mrid: str
    class_name: str
    display_name: str
    datasheet_path: str

    def as_dict(self) -> dict:
        return {
            "mrid": self.mrid,
            "class": self.class_name,
            "name": self.display_name,
            "datasheet": self.datasheet_path,
        }


@dataclass(frozen=True)
class UiConfig:
    devices: Tuple[UiDevice, ...]
    generation: int

    def as_dict(self) -> dict:
        return {
            "generation": self.generation,
            "devices": [d.as_dict() for d in self.devices],
        }


@dataclass(frozen=True)
class GatewayState:
    generation: int
    library: CimLibrary
    topology: TopologyDocument
    catalog: StorageCatalog
    mapping: MappingTable
    ui_config: UiConfig


@dataclass
class ReloadResult:
    generation: int
    validation: ValidationReport
    schema_actions: Dict[str, int]
    reinitialized: bool
    duration: float

    def as_dict(self) -> dict:
        return {
            "generation": self.generation,
            "schema_actions": self.schema_actions,
            "reinitialized": self.reinitialized,
            "duration": round(self.duration, 6),
            "validation": {
                "unknown_classes": sorted(self.validation.unknown_classes),
                "unknown_attributes": [list(x) for x in self.validation.unknown_attributes],
                "type_violations": [
                    [mrid, attr, str(kind) if kind else None, literal]
                    for mrid, attr, kind, literal in self.validation.type_violations
                ],
            },
        }


class EventBus:
    """Reload and staleness events, replayable by generation.

    A subscriber at generation g gets every logged event with a newer
    generation exactly once, then the live tail through its queue.
    """

    def __init__(self, history: int = 1000):
        self._log = deque(maxlen=history)
        self._seq = itertools.count(1)
        self._subscribers: List[Queue] = []
        self._lock = threading.Lock()

    def emit(self, event: dict):
        event = dict(event)
        event["seq"] = next(self._seq)
        with self._lock:
            self._log.append(event)
            targets = list(self._subscribers)
        for q in targets:
            q.put(event)

    def subscribe(self, since_generation: int) -> Tuple[List[dict], Queue]:
        q: Queue = Queue()
        with self._lock:
            backlog = [e for e in self._log if e.get("generation", 0) > since_generation]
            self._subscribers.append(q)
        return backlog, q

    def unsubscribe(self, q: Queue):
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class GatewayService:
    """Holds the live gateway state and runs the reload pipeline.

    The source must offer the local-node surface: topology_bytes()/
    fetch_topology(), manifest()/fetch_manifest(), read_tags(), write_tag().
    Both the in-process simulator node and the HTTP client do.
    """

    def __init__(
        self,
        library: CimLibrary,
        store: SqliteStore,
        source,
        policy: RefreshPolicy = RefreshPolicy(),
        writable_attributes: Tuple[str, ...] = (),
        tokens: Tuple[str, ...] = (),
        drop_removed_columns: bool = False,
    ):
        self._library = library
        self.store = store
        self.source = source
        self.policy = policy
        self.writable_attributes = tuple(writable_attributes)
        self.tokens = tuple(tokens)
        self.drop_removed_columns = drop_removed_columns

        self.events = EventBus()
        self._state: Optional[GatewayState] = None
        self._state_lock = threading.Lock()
        self._reload_lock = threading.Lock()
        self._sync: Optional[SyncLoop] = None
        self._last_digest: Optional[str] = None
        self._poll_thread: Optional[threading.Thread] = None
        self._poll_stop = threading.Event()
        # the reload counter survives restarts so clients following the
        # event stream converge after a gateway bounce
        self._generation = int(store.meta_get("generation") or 0)

    # --- state access ------------------------------------------------------

    @property
    def generation(self) -> int:
        return self._generation

    @property
    def library(self) -> CimLibrary:
        return self._library

    def set_library(self, library: CimLibrary):
        """Swap the class library; takes effect on the next ingest."""
        self._library = library

    def state(self) -> GatewayState:
        state = self._state
        if state is None:
            raise NotReady("no successful topology reload yet")
        return state

    def ui_config(self) -> UiConfig:
        return self.state().ui_config

    # --- the six-stage pipeline ------------------------------------------------

    def ingest_topology(self, rdf_bytes: bytes) -> ReloadResult:
        with self._reload_lock:
            started = time.monotonic()
            library = self._library
            generation = self._generation + 1

            doc = self._stage_parse(rdf_bytes)
            report = self._stage_validate(doc, library)
            diff = self._stage_plan(doc, library)
            mapping, manifest = self._stage_mapping(doc, library)
            catalog, applied, reinitialized = self._stage_apply(doc, library, diff, generation)
            self._stage_sync(doc, mapping)

            ui = self._build_ui_config(doc, generation)
            new_state = GatewayState(
                generation=generation,
                library=library,
                topology=doc,
                catalog=catalog,
                mapping=mapping,
                ui_config=ui,
            )
            with self._state_lock:
                self._state = new_state
                self._generation = generation
            self._last_digest = doc.source_digest
            result = ReloadResult(
                generation=generation,
                validation=report,
                schema_actions=applied,
                reinitialized=reinitialized,
                duration=time.monotonic() - started,
            )
            self.events.emit({"type": "reload", "generation": generation, "reload": result.as_dict()})
            return result

    def _stage_parse(self, rdf_bytes: bytes) -> TopologyDocument:
        try:
            return parse_topology(rdf_bytes)
        except (TopologyError, MalformedXml) as exc:
            raise ParseFailed(str(exc), cause=exc) from exc

    def _stage_validate(self, doc: TopologyDocument, library: CimLibrary) -> ValidationReport:
        report = validate(doc, library)
        if report.unknown_classes:
            raise ValidationFatal(
                f"unknown classes in topology: {sorted(report.unknown_classes)}", report=report
            )
        return report

    def _stage_plan(self, doc: TopologyDocument, library: CimLibrary) -> SchemaDiff:
        catalog = self.store.current_catalog()
        if catalog is None:
            # first run: storage adopts the current library version
            catalog = StorageCatalog.empty(library.version)
            self.store.save_catalog(catalog)
        try:
            return plan_schema(doc, library, catalog, include_drops=self.drop_removed_columns)
        except (UnknownClass, GatewayError) as exc:
            raise MigrationFailed(f"schema planning failed: {exc}", cause=exc) from exc

    def _stage_mapping(self, doc: TopologyDocument, library: CimLibrary):
        try:
            manifest = self._fetch_manifest()
            mapping = build_mapping(doc, manifest, library)
            return mapping, manifest
        except (SourceUnreachable, GatewayError, ValueError) as exc:
            raise MappingFailed(f"tag mapping failed: {exc}", cause=exc) from exc

    def _stage_apply(self, doc: TopologyDocument, library: CimLibrary, diff: SchemaDiff, generation: int):
        try:
            with self.store.transaction():
                reinitialized = False
                if diff.requires_reinit:
                    apply_schema(diff, self.store)
                    reinitialized = True
                    diff = plan_schema(
                        doc, library, self.store.current_catalog(),
                        include_drops=self.drop_removed_columns,
                    )
                catalog = apply_schema(diff, self.store)
                self._load_rows(doc, catalog)
                self.store.meta_set("generation", str(generation))
            summary = diff.summary()
            summary["requires_reinit"] = int(reinitialized)
            return catalog, summary, reinitialized
        except StorageFailure as exc:
            raise MigrationFailed(f"schema application failed: {exc}", cause=exc) from exc

    def _load_rows(self, doc: TopologyDocument, catalog: StorageCatalog):
        """Static row sync: upsert present elements, drop vanished ones."""
        ingested_at = _now_iso()
        known = set(self.store.element_mrids())
        for mrid in sorted(doc.elements):
            el = doc.elements[mrid]
            spec = catalog.tables.get(el.class_name)
            if spec is None:
                continue
            values = {}
            for attr, literal in el.attribute_values.items():
                column = spec.column(attr)
                if column is not None:
                    values[attr] = coerce_value(column.kind, literal)
            self.store.upsert_row(el.class_name, mrid, values)
            previous = self.store.element_class(mrid)
            if previous is not None and previous[0] != el.class_name:
                self.store.delete_row(previous[0], mrid)
            self.store.set_element(mrid, el.class_name, ingested_at)
        for mrid in known - set(doc.elements):
            located = self.store.element_class(mrid)
            if located is not None:
                self.store.delete_row(located[0], mrid)
            self.store.remove_element(mrid)
        for edge in doc.edges:
            el = doc.elements.get(edge.source)
            if el is None:
                continue
            spec = catalog.tables.get(el.class_name)
            if spec is not None and spec.column(edge.role) is not None:
                self.store.upsert_row(el.class_name, edge.source, {edge.role: edge.target})

    def _stage_sync(self, doc: TopologyDocument, mapping: MappingTable):
        previous = self._sync
        if previous is not None:
            previous.stop()
        try:
            loop = self._start_sync(doc, mapping)
        except Exception as exc:
            if previous is not None and self._state is not None:
                # revive sync for the still-live previous generation
                self._sync = self._start_sync(self._state.topology, self._state.mapping)
            raise SyncRestartFailed(f"sync restart failed: {exc}", cause=exc) from exc
        self._sync = loop

    def _start_sync(self, doc: TopologyDocument, mapping: MappingTable) -> SyncLoop:
        loop = SyncLoop(
            self.source, mapping, self.policy, self.store, doc, on_event=self._sync_event
        )
        loop.start()
        return loop

    def _sync_event(self, event: dict):
        event = dict(event)
        event["generation"] = self.generation
        self.events.emit(event)

    def _fetch_manifest(self) -> List[ManifestEntry]:
        fetch = getattr(self.source, "fetch_manifest", None) or getattr(self.source, "manifest")
        return list(fetch())

    def _fetch_topology(self) -> bytes:
        fetch = getattr(self.source, "fetch_topology", None) or getattr(self.source, "topology_bytes")
        return fetch()

    def _build_ui_config(self, doc: TopologyDocument, generation: int) -> UiConfig:
        devices = []
        for el in sorted(doc.elements.values(), key=lambda e: (e.class_name, e.mrid)):
            devices.append(
                UiDevice(
                    mrid=el.mrid,
                    class_name=el.class_name,
                    display_name=el.attribute_values.get("name", el.mrid),
                    datasheet_path=f"/api/devices/{el.mrid}",
                )
            )
        return UiConfig(devices=tuple(devices), generation=generation)

    # --- pull trigger -------------------------------------------------------------

    def ingest_from_source(self, force: bool = False) -> Optional[ReloadResult]:
        """Poll the source's topology endpoint; reload only when it changed."""
        rdf_bytes = self._fetch_topology()
        doc_digest = hashlib.sha256(rdf_bytes).hexdigest()
        if not force and doc_digest == self._last_digest:
            return None
        return self.ingest_topology(rdf_bytes)

    def start_topology_poll(self, interval: float):
        if interval <= 0:
            return

        def poll():
            while not self._poll_stop.wait(interval):
                try:
                    self.ingest_from_source()
                except (SourceUnreachable, PipelineError):
                    continue  # next tick retries; previous generation keeps serving

        self._poll_thread = threading.Thread(target=poll, name="topology-poll", daemon=True)
        self._poll_thread.start()

    def shutdown(self):
        self._poll_stop.set()
        if self._poll_thread is not None:
            self._poll_thread.join(timeout=5)
        if self._sync is not None:
            self._sync.stop()

    # --- read paths -----------------------------------------------------------------

    def datasheet(self, mrid: str) -> dict:
        state = self.state()
        el = state.topology.elements.get(mrid)
        if el is None:
            raise UnknownMrid(mrid)
        references = [
            {"role": e.role, "target": e.target}
            for e in state.topology.edges
            if e.source == mrid
        ]
        referenced_by = [
            {"role": e.role, "source": e.source}
            for e in state.topology.edges
            if e.target == mrid
        ]
        writable = [
            b.attribute
            for b in state.mapping.bindings
            if b.mrid == mrid and self._is_writable(el.class_name, b.attribute)
        ]
        return {
            "mrid": mrid,
            "class": el.class_name,
            "attributes": dict(el.attribute_values),
            "references": references,
            "referenced_by": referenced_by,
            "writable": writable,
            "data": f"/api/devices/{mrid}/data",
            "generation": state.generation,
        }

    def live_data(self, mrid: str) -> dict:
        state = self.state()
        if mrid not in state.topology.elements:
            raise UnknownMrid(mrid)
        values = latest(self.store, mrid)
        return {
            "mrid": mrid,
            "generation": state.generation,
            "values": {attr: lv.as_dict() for attr, lv in values.items()},
        }

    # --- setpoints ----------------------------------------------------------------------

    def _is_writable(self, class_name: str, attribute: str) -> bool:
        """Match 'Class.attribute' entries against the whole inheritance chain."""
        if attribute in self.writable_attributes:
            return True
        state = self._state
        library = state.library if state is not None else self._library
        if class_name in library.classes:
            chain = lineage(library, class_name)
        else:
            chain = []
        return any(f"{cls.name}.{attribute}" in self.writable_attributes for cls in chain)

    def handle_setpoint(self, mrid: str, attribute: str, value: str, token: Optional[str]) -> dict:
        state = self.state()
        if token is None or token not in self.tokens:
            raise Unauthorized("missing or unknown bearer token")
        el = state.topology.elements.get(mrid)
        if el is None:
            raise UnknownMrid(mrid)
        binding = state.mapping.binding_for(mrid, attribute)
        if binding is None or not self._is_writable(el.class_name, attribute):
            raise NotWritable(mrid, attribute)
        attr = next(
            (a for a in resolve_attributes(state.library, el.class_name) if a.name == attribute),
            None,
        )
        if attr is not None:
            kind = resolve_type(state.library, attr)
            if not literal_conforms(kind, str(value)):
                raise TypeMismatch(attribute, kind.value, value)
        ack = self.source.write_tag(binding.local_tag, str(value))
        if not ack.accepted:
            raise SourceRejected(binding.local_tag, ack.reason or "rejected")
        # read-back, never optimistic: storage updates on the next poll
        return {
            "accepted": True,
            "mrid": mrid,
            "attribute": attribute,
            "tag": binding.local_tag,
            "note": "value is confirmed by the next poll cycle",
        }
