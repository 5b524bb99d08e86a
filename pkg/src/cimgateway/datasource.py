"""Wire contract toward a local SCADA node, plus the HTTP client for it.

A data source answers batched tag reads with per-tag values or error markers
and accepts single tag writes.  The bundled simulator implements the same
surface in-process; anything speaking the HTTP form below plugs in the same
way (an OPC UA bridge would live behind this contract too).

Wire form:
    GET  /topology            -> CIM/XML/RDF bytes
    GET  /manifest            -> JSON [{"tag": .., "mrid": .., "attribute": ..}, ...]
    POST /tags/read  {"tags": [..]}
                              -> {"samples": [{"tag","value","timestamp"}], "errors": [{"tag","error"}]}
    POST /tags/write {"tag": .., "value": ..}
                              -> {"accepted": bool, "reason": str}
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import requests

from .errors import SourceUnreachable


@dataclass(frozen=True)
class TagReading:
    tag: str
    value: Optional[str] = None
    timestamp: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class WriteAck:
    accepted: bool
    reason: str = ""


@dataclass(frozen=True)
class ManifestEntry:
    tag: str
    mrid: str
    attribute: str


def parse_manifest(records) -> List[ManifestEntry]:
    """Accepts the JSON list-of-objects form or 'tag mrid attribute' lines."""
    if isinstance(records, (str, bytes)):
        text = records.decode() if isinstance(records, bytes) else records
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"manifest line needs 'tag mrid attribute': {line!r}")
            entries.append(ManifestEntry(*parts))
        return entries
    return [ManifestEntry(tag=r["tag"], mrid=r["mrid"], attribute=r["attribute"]) for r in records]


class LocalNodeClient:
    """HTTP client for a local node: topology, manifest and the tag contract."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def _request(self, method: str, path: str, **kwargs):
        try:
            response = self._session.request(
                method, self.base_url + path, timeout=self.timeout, **kwargs
            )
        except requests.RequestException as exc:
            raise SourceUnreachable(f"{self.base_url}{path}: {exc}") from exc
        if response.status_code == 503:
            raise SourceUnreachable(f"{self.base_url}{path}: node unavailable")
        if response.status_code >= 400:
            raise SourceUnreachable(f"{self.base_url}{path}: HTTP {response.status_code}")
        return response

    def fetch_topology(self) -> bytes:
        return self._request("GET", "/topology").content

    def fetch_manifest(self) -> List[ManifestEntry]:
        return parse_manifest(self._request("GET", "/manifest").json())

    def read_tags(self, tags: List[str]) -> List[TagReading]:
        body = self._request("POST", "/tags/read", json={"tags": list(tags)}).json()
        readings = [
            TagReading(tag=s["tag"], value=s["value"], timestamp=s.get("timestamp"))
            for s in body.get("samples", [])
        ]
        readings.extend(
            TagReading(tag=e["tag"], error=e.get("error", "unavailable"))
            for e in body.get("errors", [])
        )
        return readings

    def write_tag(self, tag: str, value: str) -> WriteAck:
        body = self._request("POST", "/tags/write", json={"tag": tag, "value": value}).json()
        return WriteAck(accepted=bool(body.get("accepted")), reason=body.get("reason", ""))

    def close(self):
        self._session.close()
