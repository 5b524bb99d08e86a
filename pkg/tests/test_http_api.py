"""Wire-level checks of the gateway HTTP API, including the event stream."""
import json
import threading
import time

import pytest
import requests

from cimgateway.datasource import ManifestEntry
from cimgateway.gateway import GatewayService
from cimgateway.http_api import GatewayServer
from cimgateway.id_sync import RefreshPolicy
from cimgateway.local_sim import FakeClock, Scenario, SimulatorNode
from cimgateway.storage import SqliteStore

MANIFEST = [
    ManifestEntry("plc.brk1.state", "BRK-001", "normalOpen"),
    ManifestEntry("plc.load1.p", "LOAD-001", "pfixed"),
]

SIGNALS = {
    "plc.brk1.state": {"kind": "constant", "value": "false"},
    "plc.load1.p": {"kind": "sine", "amplitude": 5000, "period": 10, "offset": 120000},
}

TOKEN = "wire-token"


@pytest.fixture()
def stack(lib_a, topo1):
    node = SimulatorNode(
        Scenario(topology=topo1, manifest=MANIFEST, signals=SIGNALS), clock=FakeClock()
    )
    gateway = GatewayService(
        library=lib_a,
        store=SqliteStore(":memory:"),
        source=node,
        policy=RefreshPolicy(period=0.05, staleness_threshold=0.5),
        writable_attributes=("Switch.normalOpen",),
        tokens=(TOKEN,),
    )
    server = GatewayServer(gateway)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server.url, gateway, node
    server.shutdown()
    server.server_close()
    gateway.shutdown()
    gateway.store.close()


def ingest(url, node):
    return requests.post(f"{url}/api/ingest", data=node.topology_bytes())


def test_generation_endpoint_and_header(stack):
    url, gateway, node = stack
    r = requests.get(f"{url}/api/generation")
    assert r.status_code == 200
    assert r.json() == {"generation": 0, "library_version": "lib-a-1"}
    assert r.headers["X-Gateway-Generation"] == "0"

    assert ingest(url, node).status_code == 200
    r = requests.get(f"{url}/api/generation")
    assert r.json()["generation"] == 1
    assert r.headers["X-Gateway-Generation"] == "1"


def test_ingest_returns_reload_summary(stack):
    url, gateway, node = stack
    body = ingest(url, node).json()
    assert body["generation"] == 1
    assert body["schema_actions"]["create_tables"] == 3
    assert body["reinitialized"] is False


def test_topology_endpoint(stack):
    url, gateway, node = stack
    ingest(url, node)
    body = requests.get(f"{url}/api/topology").json()
    assert set(body["elements"]) == {"BRK-001", "LOAD-001", "TRM-001"}
    assert body["edges"] == [
        {"source": "TRM-001", "role": "ConductingEquipment", "target": "BRK-001"}
    ]


def test_ui_config_endpoint(stack):
    url, gateway, node = stack
    ingest(url, node)
    body = requests.get(f"{url}/api/ui-config").json()
    assert [d["mrid"] for d in body["devices"]] == ["BRK-001", "LOAD-001", "TRM-001"]
    assert body["generation"] == 1


def test_not_ready_is_503(stack):
    url, _, _ = stack
    assert requests.get(f"{url}/api/ui-config").status_code == 503


def test_datasheet_and_live_data(stack):
    url, gateway, node = stack
    ingest(url, node)
    sheet = requests.get(f"{url}/api/devices/BRK-001").json()
    assert sheet["class"] == "Breaker"
    assert sheet["attributes"]["normalOpen"] == "false"
    assert sheet["writable"] == ["normalOpen"]

    time.sleep(0.15)
    data = requests.get(f"{url}/api/devices/BRK-001/data").json()
    assert data["values"]["normalOpen"]["quality"] == "Good"

    assert requests.get(f"{url}/api/devices/GHOST").status_code == 404
    assert requests.get(f"{url}/api/devices/GHOST/data").status_code == 404


def test_bad_ingest_is_400_and_previous_generation_survives(stack):
    url, gateway, node = stack
    ingest(url, node)
    r = requests.post(f"{url}/api/ingest", data=b"<rdf:RDF broken")
    assert r.status_code == 400
    assert r.json()["stage"] == "parse"
    assert requests.get(f"{url}/api/generation").json()["generation"] == 1


def test_setpoint_over_http(stack):
    url, gateway, node = stack
    ingest(url, node)
    r = requests.post(
        f"{url}/api/devices/BRK-001/setpoint",
        json={"attribute": "normalOpen", "value": "true"},
        headers={"Authorization": f"Bearer {TOKEN}"},
    )
    assert r.status_code == 200
    assert r.json()["accepted"]

    r = requests.post(
        f"{url}/api/devices/BRK-001/setpoint",
        json={"attribute": "normalOpen", "value": "7"},
        headers={"Authorization": f"Bearer {TOKEN}"},
    )
    assert r.status_code == 422

    r = requests.post(
        f"{url}/api/devices/BRK-001/setpoint",
        json={"attribute": "normalOpen", "value": "true"},
    )
    assert r.status_code == 401


def read_events(url, since, bucket, stop):
    with requests.get(f"{url}/api/events?since={since}", stream=True, timeout=10) as r:
        for line in r.iter_lines():
            if stop.is_set():
                break
            if line.startswith(b"data: "):
                bucket.append(json.loads(line[len(b"data: "):]))


def test_event_stream_delivers_reload(stack):
    url, gateway, node = stack
    ingest(url, node)
    bucket, stop = [], threading.Event()
    reader = threading.Thread(target=read_events, args=(url, 1, bucket, stop), daemon=True)
    reader.start()
    time.sleep(0.2)
    ingest(url, node)
    deadline = time.time() + 3
    while time.time() < deadline and not any(e["type"] == "reload" for e in bucket):
        time.sleep(0.05)
    stop.set()
    reloads = [e for e in bucket if e["type"] == "reload"]
    assert len(reloads) == 1
    assert reloads[0]["generation"] == 2


def test_event_stream_replays_backlog(stack):
    url, gateway, node = stack
    ingest(url, node)
    ingest(url, node)
    bucket, stop = [], threading.Event()
    reader = threading.Thread(target=read_events, args=(url, 0, bucket, stop), daemon=True)
    reader.start()
    deadline = time.time() + 3
    while time.time() < deadline and len([e for e in bucket if e["type"] == "reload"]) < 2:
        time.sleep(0.05)
    stop.set()
    generations = [e["generation"] for e in bucket if e["type"] == "reload"]
    assert generations == [1, 2]


def test_cors_preflight(stack):
    url, _, _ = stack
    r = requests.options(f"{url}/api/ui-config")
    assert r.status_code == 204
    assert r.headers["Access-Control-Allow-Origin"] == "*"
