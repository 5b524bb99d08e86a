"""Operator entry points: run the gateway, run the simulator, offline checks.

Exit codes: 0 clean, 1 findings (a non-empty report or diff), 2 usage error,
3 runtime failure.  The offline subcommands print one finding per line in a
stable order so CI can diff their output.
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .cim_library import TagNameMap, diff_libraries, load_library
from .datasource import LocalNodeClient
from .errors import GatewayError, PipelineError, SourceUnreachable
from .gateway import GatewayService
from .http_api import GatewayServer
from .id_sync import RefreshPolicy
from .local_sim import SimulatorServer, SimulatorNode, load_scenario
from .rdf_topology import parse_topology, validate
from .schema_synth import StorageCatalog, plan_schema
from .storage import SqliteStore

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


@dataclass
class GatewayConfig:
    library: str
    source_url: str
    listen: str = "127.0.0.1:8080"
    storage: str = "gateway.db"
    tag_names: Dict[str, str] = field(default_factory=dict)
    period_ms: int = 1000
    staleness_ms: int = 3000
    jitter_ms: int = 250
    poll_interval_ms: int = 0
    push_enabled: bool = True
    writable_attributes: List[str] = field(default_factory=list)
    tokens: List[str] = field(default_factory=list)
    drop_removed_columns: bool = False

    def refresh_policy(self) -> RefreshPolicy:
        return RefreshPolicy(
            period=self.period_ms / 1000.0,
            staleness_threshold=self.staleness_ms / 1000.0,
            jitter_tolerance=self.jitter_ms / 1000.0,
        )

    def listen_address(self) -> Tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)


def load_config(path) -> GatewayConfig:
    """Read the gateway config; environment may override token and listen only.

    Relative file paths resolve against the config file's directory.
    """
    path = Path(path)
    body = json.loads(path.read_text())
    refresh = body.get("refresh", {})

    def resolved(name, default):
        value = body.get(name, default)
        if value in (None, ":memory:"):
            return value
        return str((path.parent / value).resolve()) if not Path(value).is_absolute() else value

    config = GatewayConfig(
        library=resolved("library", body.get("library")),
        source_url=body["source_url"],
        listen=body.get("listen", "127.0.0.1:8080"),
        storage=resolved("storage", "gateway.db"),
        tag_names=body.get("tag_names", {}),
        period_ms=int(refresh.get("period_ms", 1000)),
        staleness_ms=int(refresh.get("staleness_ms", 3000)),
        jitter_ms=int(refresh.get("jitter_ms", 250)),
        poll_interval_ms=int(body.get("poll_interval_ms", 0)),
        push_enabled=bool(body.get("push_enabled", True)),
        writable_attributes=list(body.get("writable_attributes", [])),
        tokens=list(body.get("tokens", [])),
        drop_removed_columns=bool(body.get("drop_removed_columns", False)),
    )
    env_token = os.environ.get("CIMGATEWAY_TOKEN")
    if env_token:
        config.tokens = [env_token]
    env_listen = os.environ.get("CIMGATEWAY_LISTEN")
    if env_listen:
        config.listen = env_listen
    if config.period_ms <= 0:
        raise ValueError("refresh.period_ms must be positive")
    if config.poll_interval_ms <= 0 and not config.push_enabled:
        raise ValueError("configure a topology trigger: poll_interval_ms > 0 or push_enabled")
    return config


# --- offline subcommands --------------------------------------------------------


def _load_inputs(library_path, topology_path, tag_names=None):
    tag_map = TagNameMap.from_dict(tag_names or {})
    lib = load_library(Path(library_path).read_bytes(), tag_map)
    doc = parse_topology(Path(topology_path).read_bytes())
    return lib, doc


def _column_token(col) -> str:
    return f"{col.name}:{col.kind.value}" + ("" if col.nullable else "!")


def cmd_validate(args) -> int:
    lib, doc = _load_inputs(args.library, args.topology)
    report = validate(doc, lib)
    for name in sorted(report.unknown_classes):
        print(f"unknown-class {name}")
    for mrid, attr in sorted(report.unknown_attributes):
        print(f"unknown-attribute {mrid} {attr}")
    for mrid, attr, kind, literal in sorted(
        report.type_violations, key=lambda v: (v[0], v[1])
    ):
        expected = kind.value if kind is not None else "?"
        print(f"type-violation {mrid} {attr} {expected} {literal!r}")
    return EXIT_CLEAN if report.is_empty() else EXIT_FINDINGS


def cmd_plan_schema(args) -> int:
    lib, doc = _load_inputs(args.library, args.topology)
    if args.catalog:
        catalog = StorageCatalog.from_json(Path(args.catalog).read_text())
    else:
        catalog = StorageCatalog.empty(lib.version)
    diff = plan_schema(doc, lib, catalog)
    if diff.requires_reinit:
        print(f"reinit {diff.new_library_version}")
        return EXIT_FINDINGS
    for spec in diff.create_tables:
        cols = " ".join(_column_token(c) for c in spec.columns)
        print(f"create-table {spec.name} {cols}")
    for table, col in sorted(diff.add_columns):
        print(f"add-column {table} {_column_token(col)}")
    for table, col in sorted(diff.drop_columns):
        print(f"drop-column {table} {_column_token(col)}")
    for table in diff.drop_tables:
        print(f"drop-table {table}")
    return EXIT_CLEAN if diff.is_empty() else EXIT_FINDINGS


def cmd_diff_lib(args) -> int:
    old = load_library(Path(args.old).read_bytes())
    new = load_library(Path(args.new).read_bytes())
    diff = diff_libraries(old, new)
    for name in sorted(diff.added_classes):
        print(f"added-class {name}")
    for name in sorted(diff.removed_classes):
        print(f"removed-class {name}")
    for name in sorted(diff.changed_classes):
        change = diff.changed_classes[name]
        marks = (
            [f"+{a}" for a in change.added]
            + [f"-{a}" for a in change.removed]
            + [f"~{a}" for a in change.retyped]
        )
        print(f"changed-class {name} {' '.join(marks)}")
    return EXIT_CLEAN if diff.is_empty() else EXIT_FINDINGS


# --- long-running subcommands -------------------------------------------------------


def cmd_serve(args) -> int:
    config = load_config(args.config)
    tag_map = TagNameMap.from_dict(config.tag_names)
    library = load_library(Path(config.library).read_bytes(), tag_map)
    store = SqliteStore(config.storage)
    source = LocalNodeClient(config.source_url)
    gateway = GatewayService(
        library=library,
        store=store,
        source=source,
        policy=config.refresh_policy(),
        writable_attributes=tuple(config.writable_attributes),
        tokens=tuple(config.tokens),
        drop_removed_columns=config.drop_removed_columns,
    )
    host, port = config.listen_address()
    server = GatewayServer(gateway, host, port)

    try:
        gateway.ingest_from_source()
        print(f"initial topology loaded, generation {gateway.generation}", file=sys.stderr)
    except (SourceUnreachable, PipelineError) as exc:
        print(f"initial topology load failed ({exc}); will keep trying", file=sys.stderr)
    gateway.start_topology_poll(config.poll_interval_ms / 1000.0)

    print(f"gateway listening on {server.url} (source {config.source_url})", file=sys.stderr)
    _run_until_interrupt(server)
    gateway.shutdown()
    store.close()
    return EXIT_CLEAN


def cmd_sim(args) -> int:
    scenario = load_scenario(args.scenario)
    host, _, port = args.listen.rpartition(":")
    node = SimulatorNode(scenario, seed=args.seed)
    server = SimulatorServer(node, host or "127.0.0.1", int(port))
    print(f"simulator listening on {server.url}", file=sys.stderr)
    _run_until_interrupt(server)
    return EXIT_CLEAN


def _run_until_interrupt(server):
    done = threading.Event()

    def handle(signum, frame):
        done.set()

    previous = signal.signal(signal.SIGINT, handle)
    signal.signal(signal.SIGTERM, handle)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        done.wait()
    finally:
        signal.signal(signal.SIGINT, previous)
        server.shutdown()
        server.server_close()


# --- argument wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cimgateway",
        description="CIM compliant cloud SCADA gateway and its local-node simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the gateway")
    serve.add_argument("--config", required=True, help="gateway config file (JSON)")
    serve.set_defaults(func=cmd_serve)

    sim = sub.add_parser("sim", help="run the local-node simulator")
    sim.add_argument("--scenario", required=True, help="scenario file (JSON)")
    sim.add_argument("--listen", default="127.0.0.1:9200", help="host:port to bind")
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=cmd_sim)

    val = sub.add_parser("validate", help="check a topology against a library")
    val.add_argument("--library", required=True)
    val.add_argument("--topology", required=True)
    val.set_defaults(func=cmd_validate)

    plan = sub.add_parser("plan-schema", help="print the schema actions a topology implies")
    plan.add_argument("--library", required=True)
    plan.add_argument("--topology", required=True)
    plan.add_argument("--catalog", help="catalog JSON to plan against (default: empty)")
    plan.set_defaults(func=cmd_plan_schema)

    diff = sub.add_parser("diff-lib", help="compare two library versions")
    diff.add_argument("--old", required=True)
    diff.add_argument("--new", required=True)
    diff.set_defaults(func=cmd_diff_lib)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GatewayError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
