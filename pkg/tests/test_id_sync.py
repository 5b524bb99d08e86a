"""Mapping construction, polling, the sync loop contract and the read path."""
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cimgateway.datasource import ManifestEntry, TagReading
from cimgateway.errors import (
    DuplicateTag,
    DuplicateTarget,
    FatalStoreFailure,
    SourceUnreachable,
    UnknownMrid,
)
from cimgateway.id_sync import (
    MappingTable,
    Quality,
    RefreshPolicy,
    SyncLoop,
    build_mapping,
    latest,
    poll_once,
)
from cimgateway.local_sim import FakeClock, Scenario, SimulatorNode
from cimgateway.schema_synth import migrate
from cimgateway.storage import SqliteStore

MANIFEST = [
    ManifestEntry("plc.brk1.state", "BRK-001", "normalOpen"),
    ManifestEntry("plc.load1.p", "LOAD-001", "pfixed"),
]

SIGNALS = {
    "plc.brk1.state": {"kind": "constant", "value": "false"},
    "plc.load1.p": {"kind": "sine", "amplitude": 5000, "period": 10, "offset": 120000},
}


@pytest.fixture()
def store():
    s = SqliteStore(":memory:")
    yield s
    s.close()


@pytest.fixture()
def node(topo1):
    return SimulatorNode(
        Scenario(topology=topo1, manifest=MANIFEST, signals=SIGNALS), clock=FakeClock()
    )


def load_rows(store, topo1, lib_a):
    """Minimal ingest stand-in: schema plus element index and static rows."""
    from cimgateway.storage import coerce_value

    catalog, _, _ = migrate(topo1, lib_a, store)
    for mrid, el in topo1.elements.items():
        spec = catalog.tables[el.class_name]
        values = {}
        for attr, literal in el.attribute_values.items():
            col = spec.column(attr)
            if col is not None:
                values[attr] = coerce_value(col.kind, literal)
        store.upsert_row(el.class_name, mrid, values)
        store.set_element(mrid, el.class_name, "2020-01-01T00:00:00+00:00")
    return catalog


# --- mapping ---------------------------------------------------------------


def test_build_mapping_binds_fixture(topo1, lib_a):
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    assert len(mapping.bindings) == 2
    assert not mapping.unmapped_tags
    assert mapping.binding_for("BRK-001", "normalOpen").local_tag == "plc.brk1.state"


def test_empty_manifest_leaves_everything_unmapped(topo1, lib_a):
    mapping = build_mapping(topo1, [], lib_a)
    assert mapping.bindings == ()
    # every element that carries document attributes is unmapped
    assert mapping.unmapped_mrids == {"BRK-001", "LOAD-001"}


def test_duplicate_tag_rejected(topo1, lib_a):
    manifest = [
        ManifestEntry("plc.brk1.state", "BRK-001", "normalOpen"),
        ManifestEntry("plc.brk1.state", "LOAD-001", "pfixed"),
    ]
    with pytest.raises(DuplicateTag):
        build_mapping(topo1, manifest, lib_a)


def test_duplicate_target_rejected(topo1, lib_a):
    manifest = [
        ManifestEntry("a", "BRK-001", "normalOpen"),
        ManifestEntry("b", "BRK-001", "normalOpen"),
    ]
    with pytest.raises(DuplicateTarget):
        build_mapping(topo1, manifest, lib_a)


def test_unknown_mrid_goes_to_unmapped_tags(topo1, lib_a):
    manifest = MANIFEST + [ManifestEntry("plc.ghost", "GHOST-9", "normalOpen")]
    mapping = build_mapping(topo1, manifest, lib_a)
    assert mapping.unmapped_tags == {"plc.ghost"}


def test_unknown_attribute_goes_to_unmapped_tags(topo1, lib_a):
    manifest = [ManifestEntry("plc.x", "BRK-001", "tripCount")]
    mapping = build_mapping(topo1, manifest, lib_a)
    assert mapping.unmapped_tags == {"plc.x"}
    assert not mapping.bindings


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["BRK-001", "LOAD-001", "TRM-001", "NOPE"]),
                          st.sampled_from(["normalOpen", "pfixed", "name", "bogus"]))))
def test_mapping_stays_bijective(pairs):
    from cimgateway.cim_library import load_library
    from cimgateway.rdf_topology import parse_topology
    from tests.conftest import FIXTURES

    lib = load_library((FIXTURES / "lib_a.xmi").read_bytes())
    doc = parse_topology((FIXTURES / "topo1.rdf").read_bytes())
    manifest = []
    seen_tag, seen_target = set(), set()
    for i, (mrid, attr) in enumerate(pairs):
        tag = f"t{i}"
        if tag in seen_tag or (mrid, attr) in seen_target:
            continue
        seen_tag.add(tag)
        seen_target.add((mrid, attr))
        manifest.append(ManifestEntry(tag, mrid, attr))
    mapping = build_mapping(doc, manifest, lib)
    tags = [b.local_tag for b in mapping.bindings]
    targets = [(b.mrid, b.attribute) for b in mapping.bindings]
    assert len(set(tags)) == len(tags)
    assert len(set(targets)) == len(targets)
    assert len(mapping.bindings) <= len(manifest)
    assert set(tags).isdisjoint(mapping.unmapped_tags)


# --- polling -----------------------------------------------------------------


def test_poll_once_good(node, topo1, lib_a):
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    samples = poll_once(node, mapping)
    assert len(samples) == 2
    assert all(s.quality is Quality.GOOD for s in samples)
    by_tag = {s.local_tag: s for s in samples}
    assert by_tag["plc.brk1.state"].value == "false"


def test_poll_once_dropped_tag_is_bad(node, topo1, lib_a):
    node.drop_tag("plc.load1.p")
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    samples = poll_once(node, mapping)
    assert len(samples) == 2
    qualities = {s.local_tag: s.quality for s in samples}
    assert qualities["plc.load1.p"] is Quality.BAD
    assert qualities["plc.brk1.state"] is Quality.GOOD


def test_poll_once_empty_mapping(node):
    empty = MappingTable(bindings=(), unmapped_mrids=frozenset(), unmapped_tags=frozenset())
    assert poll_once(node, empty) == []


def test_poll_once_unreachable(node, topo1, lib_a):
    node.pause()
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    with pytest.raises(SourceUnreachable):
        poll_once(node, mapping)


# --- refresh policy -----------------------------------------------------------


def test_policy_validation():
    with pytest.raises(ValueError):
        RefreshPolicy(period=0)
    with pytest.raises(ValueError):
        RefreshPolicy(period=1.0, staleness_threshold=0.5)


# --- sync loop -------------------------------------------------------------------


def run_loop(store, node, topo1, lib_a, policy, runtime):
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    events = []
    loop = SyncLoop(node, mapping, policy, store, topo1, on_event=events.append)
    loop.start()
    time.sleep(runtime)
    loop.stop()
    return loop, events


def test_loop_tick_rate(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.1, staleness_threshold=1.0)
    loop, _ = run_loop(store, node, topo1, lib_a, policy, runtime=1.0)
    assert 8 <= loop.ticks <= 12


def test_loop_updates_bound_attributes_within_two_periods(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.1, staleness_threshold=1.0)
    loop, _ = run_loop(store, node, topo1, lib_a, policy, runtime=0.2)
    brk = latest(store, "BRK-001")
    load = latest(store, "LOAD-001")
    assert brk["normalOpen"].quality is Quality.GOOD
    assert load["pfixed"].quality is Quality.GOOD
    assert store.quality_of("BRK-001", "normalOpen") == "Good"


def test_loop_marks_stale_when_source_pauses(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.05, staleness_threshold=0.1)
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    events = []
    loop = SyncLoop(node, mapping, policy, store, topo1, on_event=events.append)
    loop.start()
    time.sleep(0.15)
    node.pause()
    time.sleep(0.35)  # > 3x staleness threshold
    loop.stop()
    assert latest(store, "BRK-001")["normalOpen"].quality is Quality.STALE
    assert latest(store, "LOAD-001")["pfixed"].quality is Quality.STALE
    kinds = {e["type"] for e in events}
    assert "staleness" in kinds
    assert "source-unreachable" in kinds


def test_loop_survives_transient_unreachable(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.05, staleness_threshold=5.0)
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    loop = SyncLoop(node, mapping, policy, store, topo1)
    loop.start()
    time.sleep(0.12)
    node.pause()
    time.sleep(0.12)
    node.resume()
    time.sleep(0.12)
    still_running = loop.running
    loop.stop()
    assert still_running
    assert loop.exit_cause is None


def test_loop_fatal_on_lost_store(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.05, staleness_threshold=5.0)
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    loop = SyncLoop(node, mapping, policy, store, topo1)
    loop.start()
    time.sleep(0.12)
    store.drop_table("Breaker")  # yank the table out from under the loop
    store.drop_table("EnergyConsumer")
    deadline = time.time() + 2
    while loop.running and time.time() < deadline:
        time.sleep(0.02)
    assert not loop.running
    assert isinstance(loop.exit_cause, FatalStoreFailure)


def test_loop_never_writes_outside_mapping(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    before_brk = store.read_row("Breaker", "BRK-001")
    before_trm = store.read_row("Terminal", "TRM-001")
    policy = RefreshPolicy(period=0.05, staleness_threshold=5.0)
    run_loop(store, node, topo1, lib_a, policy, runtime=0.2)
    after_brk = store.read_row("Breaker", "BRK-001")
    after_trm = store.read_row("Terminal", "TRM-001")
    # unbound columns and unbound rows are untouched
    assert after_trm == before_trm
    for col in ("name", "aggregate", "ratedCurrent"):
        assert after_brk[col] == before_brk[col]


def test_monotone_freshness(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.05, staleness_threshold=5.0)
    mapping = build_mapping(topo1, MANIFEST, lib_a)
    loop = SyncLoop(node, mapping, policy, store, topo1)
    loop.start()
    stamps = []
    for _ in range(6):
        time.sleep(0.05)
        entry = store.sync_entries("LOAD-001").get("pfixed")
        if entry and entry[1]:
            stamps.append(entry[1])
    loop.stop()
    assert stamps == sorted(stamps)
    assert stamps


# --- latest ------------------------------------------------------------------------


def test_latest_before_any_poll_serves_ingest_values(store, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    values = latest(store, "BRK-001")
    assert values["normalOpen"].value == 0  # RDF literal "false", coerced
    assert values["normalOpen"].quality is Quality.GOOD
    assert values["name"].value == "Main breaker"


def test_latest_after_poll_carries_simulator_value(store, node, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    policy = RefreshPolicy(period=0.05, staleness_threshold=5.0)
    run_loop(store, node, topo1, lib_a, policy, runtime=0.15)
    values = latest(store, "LOAD-001")
    assert values["pfixed"].quality is Quality.GOOD
    assert values["pfixed"].timestamp is not None
    assert isinstance(values["pfixed"].value, float)


def test_latest_unknown_mrid(store, topo1, lib_a):
    load_rows(store, topo1, lib_a)
    with pytest.raises(UnknownMrid):
        latest(store, "X-999")
