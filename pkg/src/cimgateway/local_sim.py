"""Simulated local SCADA node.

Serves a scenario-defined topology and tag manifest, produces evolving live
values, accepts setpoint writes and applies scripted mutations mid-run, so
the gateway's adaptation paths can be exercised without field hardware.
Deterministic given a seed and a controllable clock.
"""
from __future__ import annotations

import copy
import json
import math
import random
import threading
import time
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .datasource import ManifestEntry, TagReading, WriteAck, parse_manifest
from .errors import ScenarioInvalid, SourceUnreachable
from .rdf_topology import (
    ElementInstance,
    ReferenceEdge,
    TopologyDocument,
    parse_topology,
    serialize_topology,
)

# --- clocks -------------------------------------------------------------------


class WallClock:
    """Real time; the default outside tests."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat()


class FakeClock:
    """Manually advanced time for deterministic scenario runs."""

    EPOCH = datetime(2020, 1, 1, tzinfo=timezone.utc)

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def timestamp(self) -> str:
        return (self.EPOCH + timedelta(seconds=self._t)).isoformat()

    def advance(self, seconds: float):
        self._t += seconds


# --- signals --------------------------------------------------------------------


class ConstantSignal:
    def __init__(self, value: str):
        self.value = str(value)

    def value_at(self, t: float) -> str:
        return self.value


class SineSignal:
    def __init__(self, amplitude: float, period: float, offset: float = 0.0):
        if period <= 0:
            raise ScenarioInvalid("sine period must be positive")
        self.amplitude = amplitude
        self.period = period
        self.offset = offset

    def value_at(self, t: float) -> str:
        return f"{self.offset + self.amplitude * math.sin(2 * math.pi * t / self.period):.3f}"


class RandomWalkSignal:
    def __init__(self, step: float, start: float = 0.0, seed: int = 0):
        self.step = step
        self.current = start
        self._rng = random.Random(seed)

    def value_at(self, t: float) -> str:
        self.current += self._rng.uniform(-self.step, self.step)
        return f"{self.current:.3f}"


def _signal_from_spec(tag: str, spec: dict, seed: int):
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantSignal(spec["value"])
    if kind == "sine":
        return SineSignal(spec["amplitude"], spec["period"], spec.get("offset", 0.0))
    if kind == "random_walk":
        # stable per-tag seed: process hash randomization must not leak in
        tag_seed = spec.get("seed", seed) ^ zlib.crc32(tag.encode())
        return RandomWalkSignal(spec["step"], spec.get("start", 0.0), tag_seed)
    raise ScenarioInvalid(f"unknown signal kind {kind!r} for tag {tag!r}")


# --- scenario ---------------------------------------------------------------------


@dataclass(frozen=True)
class Mutation:
    action: str  # add_element | remove_element | change_attribute | drop_tag | restore_tag
    mrid: Optional[str] = None
    element: Optional[dict] = None
    name: Optional[str] = None
    value: Optional[str] = None
    tag: Optional[str] = None


@dataclass
class Scenario:
    topology: TopologyDocument
    manifest: List[ManifestEntry]
    signals: Dict[str, dict]
    events: List[Tuple[float, Mutation]] = field(default_factory=list)

    def validate(self):
        tags = {e.tag for e in self.manifest}
        missing = tags - set(self.signals)
        if missing:
            raise ScenarioInvalid(f"manifest tags without a signal spec: {sorted(missing)}")
        last = None
        for at, _ in self.events:
            if last is not None and at <= last:
                raise ScenarioInvalid("event times must be strictly increasing")
            last = at
        self._replay_events(tags)

    def _replay_events(self, tags):
        """Static check that every mutation's target exists at event time."""
        mrids = set(self.topology.elements)
        live_tags = set(tags)
        for at, m in self.events:
            if m.action == "add_element":
                if not m.element or "mrid" not in m.element:
                    raise ScenarioInvalid(f"add_element at t={at} needs an element with an mrid")
                mrids.add(m.element["mrid"])
            elif m.action == "remove_element":
                if m.mrid not in mrids:
                    raise ScenarioInvalid(f"remove_element at t={at}: unknown mrid {m.mrid!r}")
                mrids.discard(m.mrid)
            elif m.action == "change_attribute":
                if m.mrid not in mrids:
                    raise ScenarioInvalid(f"change_attribute at t={at}: unknown mrid {m.mrid!r}")
            elif m.action == "drop_tag":
                if m.tag not in live_tags:
                    raise ScenarioInvalid(f"drop_tag at t={at}: unknown tag {m.tag!r}")
                live_tags.discard(m.tag)
            elif m.action == "restore_tag":
                if m.tag in live_tags or m.tag not in {e.tag for e in self.manifest}:
                    raise ScenarioInvalid(f"restore_tag at t={at}: tag {m.tag!r} is not dropped")
                live_tags.add(m.tag)
            else:
                raise ScenarioInvalid(f"unknown mutation action {m.action!r}")


def _element_from_dict(spec: dict) -> Tuple[ElementInstance, List[ReferenceEdge]]:
    el = ElementInstance(
        mrid=spec["mrid"],
        class_name=spec["class"],
        attribute_values=dict(spec.get("attributes", {})),
    )
    edges = [
        ReferenceEdge(el.mrid, r["role"], r["target"]) for r in spec.get("references", [])
    ]
    return el, edges


def load_scenario(path) -> Scenario:
    """Read a scenario from its JSON document (topology inline or by file)."""
    path = Path(path)
    try:
        body = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioInvalid(f"cannot read scenario {path}: {exc}") from exc

    topo_spec = body.get("topology")
    if isinstance(topo_spec, str):
        rdf_path = (path.parent / topo_spec).resolve()
        topology = parse_topology(rdf_path.read_bytes())
    elif isinstance(topo_spec, list):
        elements, edges = {}, []
        for entry in topo_spec:
            el, el_edges = _element_from_dict(entry)
            elements[el.mrid] = el
            edges.extend(el_edges)
        topology = TopologyDocument(elements=elements, edges=edges, source_digest="inline")
    else:
        raise ScenarioInvalid("scenario needs a topology: file reference or element list")

    events = []
    for entry in body.get("events", []):
        fields = {k: v for k, v in entry.items() if k not in ("at", "action")}
        events.append((float(entry["at"]), Mutation(action=entry["action"], **fields)))

    scenario = Scenario(
        topology=topology,
        manifest=parse_manifest(body.get("manifest", [])),
        signals=body.get("signals", {}),
        events=events,
    )
    scenario.validate()
    return scenario


# --- the node -----------------------------------------------------------------------


class SimulatorNode:
    """In-process local node; also the state behind the HTTP endpoints.

    Implements the gateway-facing surface directly: topology_bytes(),
    manifest(), read_tags(), write_tag().  Scripted events are applied
    lazily whenever the clock has passed them, so a FakeClock drives the
    whole run deterministically.
    """

    def __init__(self, scenario: Scenario, clock=None, seed: int = 0):
        scenario.validate()
        self.scenario = scenario
        self.clock = clock or WallClock()
        self.seed = seed
        self._lock = threading.RLock()
        self._elements = copy.deepcopy(scenario.topology.elements)
        self._edges = list(scenario.topology.edges)
        self._signals = {
            tag: _signal_from_spec(tag, spec, seed) for tag, spec in scenario.signals.items()
        }
        self._declared = {e.tag for e in scenario.manifest}
        self._dropped: set = set()
        self._overrides: Dict[str, str] = {}
        self._pending = list(scenario.events)
        self._paused = False
        self.reads = 0

    # --- time / events ------------------------------------------------------

    def _apply_due_events(self):
        now = self.clock.now()
        while self._pending and self._pending[0][0] <= now:
            _, m = self._pending.pop(0)
            self._apply(m)
            self._overrides.clear()  # writes override signals only until the next scripted event

    def _apply(self, m: Mutation):
        if m.action == "add_element":
            el, edges = _element_from_dict(m.element)
            self._elements[el.mrid] = el
            self._edges.extend(edges)
        elif m.action == "remove_element":
            self._elements.pop(m.mrid, None)
            self._edges = [e for e in self._edges if e.source != m.mrid and e.target != m.mrid]
        elif m.action == "change_attribute":
            self._elements[m.mrid].attribute_values[m.name] = m.value
        elif m.action == "drop_tag":
            self._dropped.add(m.tag)
        elif m.action == "restore_tag":
            self._dropped.discard(m.tag)

    # --- control (test harness surface) ----------------------------------------

    def pause(self):
        with self._lock:
            self._paused = True

    def resume(self):
        with self._lock:
            self._paused = False

    @property
    def paused(self) -> bool:
        return self._paused

    def drop_tag(self, tag: str):
        with self._lock:
            self._dropped.add(tag)

    def restore_tag(self, tag: str):
        with self._lock:
            self._dropped.discard(tag)

    # --- gateway-facing surface ---------------------------------------------------

    def topology_bytes(self) -> bytes:
        with self._lock:
            if self._paused:
                raise SourceUnreachable("simulator paused")
            self._apply_due_events()
            doc = TopologyDocument(
                elements=self._elements, edges=self._edges, source_digest="live"
            )
            return serialize_topology(doc)

    def manifest(self) -> List[ManifestEntry]:
        with self._lock:
            if self._paused:
                raise SourceUnreachable("simulator paused")
            return list(self.scenario.manifest)

    def read_tags(self, tags: List[str]) -> List[TagReading]:
        with self._lock:
            if self._paused:
                raise SourceUnreachable("simulator paused")
            self._apply_due_events()
            self.reads += 1
            now = self.clock.now()
            stamp = self.clock.timestamp()
            readings = []
            for tag in tags:
                if tag not in self._declared or tag not in self._signals:
                    readings.append(TagReading(tag=tag, error="UnknownTag"))
                elif tag in self._dropped:
                    readings.append(TagReading(tag=tag, error="unavailable"))
                elif tag in self._overrides:
                    readings.append(TagReading(tag=tag, value=self._overrides[tag], timestamp=stamp))
                else:
                    readings.append(
                        TagReading(tag=tag, value=self._signals[tag].value_at(now), timestamp=stamp)
                    )
            return readings

    def write_tag(self, tag: str, value: str) -> WriteAck:
        with self._lock:
            if self._paused:
                raise SourceUnreachable("simulator paused")
            self._apply_due_events()
            if tag not in self._declared or tag in self._dropped:
                return WriteAck(accepted=False, reason="UnknownTag")
            self._overrides[tag] = str(value)
            return WriteAck(accepted=True)


# --- HTTP wiring -----------------------------------------------------------------------


class _SimHandler(BaseHTTPRequestHandler):
    server_version = "cimgateway-sim/0.1"

    @property
    def node(self) -> SimulatorNode:
        return self.server.node  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # quiet; tests read stdout
        pass

    def _send(self, status: int, body: bytes, content_type: str = "application/json"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, payload, status: int = 200):
        self._send(status, json.dumps(payload).encode())

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw or b"{}")

    def do_GET(self):
        try:
            if self.path == "/topology":
                self._send(200, self.node.topology_bytes(), "application/xml")
            elif self.path == "/manifest":
                entries = self.node.manifest()
                self._send_json(
                    [{"tag": e.tag, "mrid": e.mrid, "attribute": e.attribute} for e in entries]
                )
            elif self.path == "/status":
                self._send_json({"paused": self.node.paused, "time": self.node.clock.now()})
            else:
                self._send_json({"error": "not found"}, 404)
        except SourceUnreachable:
            self._send_json({"error": "unavailable"}, 503)

    def do_POST(self):
        try:
            body = self._read_body()
            if self.path == "/tags/read":
                readings = self.node.read_tags(body.get("tags", []))
                self._send_json(
                    {
                        "samples": [
                            {"tag": r.tag, "value": r.value, "timestamp": r.timestamp}
                            for r in readings
                            if r.ok
                        ],
                        "errors": [{"tag": r.tag, "error": r.error} for r in readings if not r.ok],
                    }
                )
            elif self.path == "/tags/write":
                ack = self.node.write_tag(body.get("tag", ""), body.get("value", ""))
                self._send_json({"accepted": ack.accepted, "reason": ack.reason})
            elif self.path == "/control":
                self._control(body)
            else:
                self._send_json({"error": "not found"}, 404)
        except SourceUnreachable:
            self._send_json({"error": "unavailable"}, 503)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._send_json({"error": str(exc)}, 400)

    def _control(self, body: dict):
        action = body.get("action")
        if action == "pause":
            self.node.pause()
        elif action == "resume":
            self.node.resume()
        elif action == "advance":
            clock = self.node.clock
            if not isinstance(clock, FakeClock):
                self._send_json({"error": "node runs on the wall clock"}, 400)
                return
            clock.advance(float(body.get("seconds", 0)))
        else:
            self._send_json({"error": f"unknown action {action!r}"}, 400)
            return
        self._send_json({"ok": True, "paused": self.node.paused, "time": self.node.clock.now()})


class SimulatorServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, node: SimulatorNode, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _SimHandler)
        self.node = node

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"


def serve(scenario: Scenario, host: str = "127.0.0.1", port: int = 0, clock=None, seed: int = 0) -> SimulatorServer:
    """Start a node over HTTP; returns the server (caller drives serve_forever)."""
    node = SimulatorNode(scenario, clock=clock, seed=seed)
    return SimulatorServer(node, host, port)
