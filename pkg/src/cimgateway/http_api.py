"""HTTP surface of the gateway.

Plain request/response with JSON bodies; the event stream is server-sent
events so a browser client can follow reloads with a bare EventSource.
Every response carries the current generation in X-Gateway-Generation for
client-side staleness detection.
"""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from queue import Empty
from urllib.parse import parse_qs, urlparse

from .errors import (
    GatewayError,
    NotReady,
    NotWritable,
    ParseFailed,
    PipelineError,
    SourceRejected,
    SourceUnreachable,
    TypeMismatch,
    Unauthorized,
    UnknownMrid,
    ValidationFatal,
)
from .gateway import GatewayService

_DEVICE = re.compile(r"^/api/devices/([^/]+)$")
_DEVICE_DATA = re.compile(r"^/api/devices/([^/]+)/data$")
_DEVICE_SETPOINT = re.compile(r"^/api/devices/([^/]+)/setpoint$")

_STATUS = {
    NotReady: 503,
    UnknownMrid: 404,
    Unauthorized: 401,
    NotWritable: 403,
    TypeMismatch: 422,
    SourceRejected: 409,
    SourceUnreachable: 502,
    ParseFailed: 400,
    ValidationFatal: 422,
}


def _status_for(exc: GatewayError) -> int:
    for cls, status in _STATUS.items():
        if isinstance(exc, cls):
            return status
    if isinstance(exc, PipelineError):
        return 500
    return 400


class GatewayApiHandler(BaseHTTPRequestHandler):
    server_version = "cimgateway/0.1"
    protocol_version = "HTTP/1.1"

    @property
    def gateway(self) -> GatewayService:
        return self.server.gateway  # type: ignore[attr-defined]

    def log_message(self, format, *args):
        pass

    # --- plumbing ------------------------------------------------------------

    def _headers(self, status: int, content_type: str, length=None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("X-Gateway-Generation", str(self.gateway.generation))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        if length is not None:
            self.send_header("Content-Length", str(length))
        self.end_headers()

    def _send_json(self, payload, status: int = 200):
        body = json.dumps(payload).encode()
        self._headers(status, "application/json", len(body))
        self.wfile.write(body)

    def _send_error(self, exc: GatewayError):
        payload = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, PipelineError):
            payload["stage"] = exc.stage
        self._send_json(payload, _status_for(exc))

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _bearer_token(self):
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            return header[len("Bearer "):].strip()
        return None

    # --- routes -----------------------------------------------------------------

    def do_OPTIONS(self):
        self._headers(204, "text/plain", 0)

    def do_GET(self):
        url = urlparse(self.path)
        try:
            if url.path == "/api/generation":
                self._send_json(
                    {
                        "generation": self.gateway.generation,
                        "library_version": self.gateway.library.version,
                    }
                )
            elif url.path == "/api/topology":
                self._get_topology()
            elif url.path == "/api/ui-config":
                self._send_json(self.gateway.ui_config().as_dict())
            elif url.path == "/api/events":
                self._stream_events(url)
            elif m := _DEVICE_DATA.match(url.path):
                self._send_json(self.gateway.live_data(m.group(1)))
            elif m := _DEVICE.match(url.path):
                self._send_json(self.gateway.datasheet(m.group(1)))
            else:
                self._send_json({"error": "not found"}, 404)
        except GatewayError as exc:
            self._send_error(exc)

    def do_POST(self):
        url = urlparse(self.path)
        try:
            if url.path == "/api/ingest":
                result = self.gateway.ingest_topology(self._read_body())
                self._send_json(result.as_dict())
            elif m := _DEVICE_SETPOINT.match(url.path):
                body = json.loads(self._read_body() or b"{}")
                ack = self.gateway.handle_setpoint(
                    m.group(1), body.get("attribute", ""), body.get("value", ""),
                    self._bearer_token(),
                )
                self._send_json(ack)
            else:
                self._send_json({"error": "not found"}, 404)
        except json.JSONDecodeError as exc:
            self._send_json({"error": "BadRequest", "detail": str(exc)}, 400)
        except GatewayError as exc:
            self._send_error(exc)

    def _get_topology(self):
        state = self.gateway.state()
        elements = {
            mrid: {
                "class": el.class_name,
                "attributes": dict(el.attribute_values),
            }
            for mrid, el in sorted(state.topology.elements.items())
        }
        edges = [
            {"source": e.source, "role": e.role, "target": e.target}
            for e in state.topology.edges
        ]
        self._send_json(
            {"generation": state.generation, "elements": elements, "edges": edges}
        )

    # --- event stream ----------------------------------------------------------------

    def _stream_events(self, url):
        params = parse_qs(url.query)
        try:
            since = int(params.get("since", [self.gateway.generation])[0])
        except ValueError:
            since = self.gateway.generation
        backlog, queue = self.gateway.events.subscribe(since)

        self.close_connection = True
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        # chunked framing so buffered clients see each event immediately
        self.send_header("Transfer-Encoding", "chunked")
        self.send_header("X-Gateway-Generation", str(self.gateway.generation))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        try:
            for event in backlog:
                self._write_event(event)
            while not getattr(self.server, "closing", False):
                try:
                    event = queue.get(timeout=1.0)
                except Empty:
                    self._write_chunk(b": keepalive\n\n")
                    continue
                self._write_event(event)
            self.wfile.write(b"0\r\n\r\n")
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.gateway.events.unsubscribe(queue)

    def _write_event(self, event: dict):
        self._write_chunk(b"data: " + json.dumps(event).encode() + b"\n\n")

    def _write_chunk(self, payload: bytes):
        self.wfile.write(f"{len(payload):X}\r\n".encode() + payload + b"\r\n")
        self.wfile.flush()


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True
    closing = False

    def __init__(self, gateway: GatewayService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), GatewayApiHandler)
        self.gateway = gateway

    @property
    def url(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"

    def shutdown(self):
        self.closing = True  # lets event streams drain out within a keepalive tick
        super().shutdown()


def serve_gateway(gateway: GatewayService, host: str = "127.0.0.1", port: int = 0) -> GatewayServer:
    """Bind the API server; the caller drives serve_forever (thread or main)."""
    return GatewayServer(gateway, host, port)
