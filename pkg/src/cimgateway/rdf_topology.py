"""CIM/XML/RDF topology documents: parsing, validation, diffing.

A topology document lists concrete system elements (one RDF description per
device, keyed by mRID) and their interconnections (rdf:resource children).
Literals stay verbatim strings here; coercion happens at validation and
storage time, which need different rules.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple
from xml.etree import ElementTree as ET

from .cim_library import (
    CimLibrary,
    PrimitiveKind,
    _resolved_kind,
    literal_conforms,
    local_name,
    resolve_attributes,
)
from .errors import DuplicateMrid, MalformedXml, MissingId

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
CIM_NS = "http://iec.ch/TC57/CIM-schema#"

_RDF_ID = f"{{{RDF_NS}}}ID"
_RDF_ABOUT = f"{{{RDF_NS}}}about"
_RDF_RESOURCE = f"{{{RDF_NS}}}resource"

Mrid = str


@dataclass(frozen=True)
class ReferenceEdge:
    source: Mrid
    role: str
    target: Mrid


@dataclass
class ElementInstance:
    mrid: Mrid
    class_name: str
    attribute_values: Dict[str, str] = field(default_factory=dict)


@dataclass
class TopologyDocument:
    elements: Dict[Mrid, ElementInstance]
    edges: List[ReferenceEdge]
    source_digest: str
    warnings: List[str] = field(default_factory=list)

    def dangling_edges(self) -> List[ReferenceEdge]:
        """Edges whose target is not described in this document."""
        return [e for e in self.edges if e.target not in self.elements]

    def class_names(self) -> Set[str]:
        return {el.class_name for el in self.elements.values()}


@dataclass
class ValidationReport:
    unknown_classes: Set[str] = field(default_factory=set)
    unknown_attributes: List[Tuple[Mrid, str]] = field(default_factory=list)
    type_violations: List[Tuple[Mrid, str, Optional[PrimitiveKind], str]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.unknown_classes or self.unknown_attributes or self.type_violations)


@dataclass
class TopologyDiff:
    added: Set[Mrid] = field(default_factory=set)
    removed: Set[Mrid] = field(default_factory=set)
    changed: Dict[Mrid, Set[str]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.changed)


def _property_name(tag: str) -> str:
    # CIM convention writes properties as Class.property; the attribute
    # name is the part after the last dot, once namespaces are stripped.
    name = local_name(tag)
    if "." in name:
        name = name.rsplit(".", 1)[1]
    return name


def parse_topology(rdf_bytes: bytes) -> TopologyDocument:
    """Extract element instances and reference edges from RDF/XML bytes.

    Each description carries rdf:ID or rdf:about (leading '#' stripped);
    child elements with rdf:resource become edges, everything else becomes
    a verbatim attribute literal.
    """
    try:
        root = ET.fromstring(rdf_bytes)
    except ET.ParseError as exc:
        raise MalformedXml(f"not well-formed XML: {exc}") from exc

    elements: Dict[Mrid, ElementInstance] = {}
    edges: List[ReferenceEdge] = []
    warnings: List[str] = []

    for node in root:
        class_name = local_name(node.tag)
        mrid = node.get(_RDF_ID)
        if mrid is None:
            about = node.get(_RDF_ABOUT)
            if about is not None:
                mrid = about.lstrip("#")
        if not mrid:
            raise MissingId(class_name)
        if mrid in elements:
            raise DuplicateMrid(mrid)

        instance = ElementInstance(mrid=mrid, class_name=class_name)
        for child in node:
            resource = child.get(_RDF_RESOURCE)
            prop = _property_name(child.tag)
            if resource is not None:
                edges.append(ReferenceEdge(source=mrid, role=prop, target=resource.lstrip("#")))
            else:
                instance.attribute_values[prop] = child.text or ""
        elements[mrid] = instance

    doc = TopologyDocument(
        elements=elements,
        edges=edges,
        source_digest=hashlib.sha256(rdf_bytes).hexdigest(),
        warnings=warnings,
    )
    for edge in doc.dangling_edges():
        warnings.append(f"edge {edge.source} -{edge.role}-> {edge.target} targets an element outside this document")
    return doc


def serialize_topology(doc: TopologyDocument) -> bytes:
    """Canonical RDF/XML: UTF-8, elements sorted by mRID, attributes by name.

    Reparsing the output yields the same elements and edges, which is what
    the round-trip tests and the simulator's topology endpoint rely on.
    """
    ET.register_namespace("rdf", RDF_NS)
    ET.register_namespace("cim", CIM_NS)
    root = ET.Element(f"{{{RDF_NS}}}RDF")
    edges_by_source: Dict[str, List[ReferenceEdge]] = {}
    for edge in doc.edges:
        edges_by_source.setdefault(edge.source, []).append(edge)

    for mrid in sorted(doc.elements):
        el = doc.elements[mrid]
        node = ET.SubElement(root, f"{{{CIM_NS}}}{el.class_name}")
        node.set(_RDF_ID, mrid)
        for attr in sorted(el.attribute_values):
            child = ET.SubElement(node, f"{{{CIM_NS}}}{el.class_name}.{attr}")
            child.text = el.attribute_values[attr]
        for edge in sorted(edges_by_source.get(mrid, []), key=lambda e: (e.role, e.target)):
            child = ET.SubElement(node, f"{{{CIM_NS}}}{el.class_name}.{edge.role}")
            child.set(_RDF_RESOURCE, f"#{edge.target}")

    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def validate(doc: TopologyDocument, lib: CimLibrary) -> ValidationReport:
    """Check every instance against the class library; never raises on content.

    Unknown classes are reported once; attributes of an unknown class are not
    re-reported.  A literal that fails to parse as its resolved kind is a
    type violation; an attribute whose declared type resolves to nothing is
    reported as a violation with no expected kind.
    """
    report = ValidationReport()
    resolved_cache: Dict[str, Dict[str, Optional[PrimitiveKind]]] = {}

    for mrid in sorted(doc.elements):
        el = doc.elements[mrid]
        if el.class_name not in lib.classes:
            report.unknown_classes.add(el.class_name)
            continue
        if el.class_name not in resolved_cache:
            resolved_cache[el.class_name] = {
                attr.name: _resolved_kind(lib, attr)
                for attr in resolve_attributes(lib, el.class_name)
            }
        kinds = resolved_cache[el.class_name]
        for attr_name in sorted(el.attribute_values):
            literal = el.attribute_values[attr_name]
            if attr_name not in kinds:
                report.unknown_attributes.append((mrid, attr_name))
                continue
            kind = kinds[attr_name]
            if kind is None:
                report.type_violations.append((mrid, attr_name, None, literal))
            elif not literal_conforms(kind, literal):
                report.type_violations.append((mrid, attr_name, kind, literal))
    return report


def diff_topologies(old: TopologyDocument, new: TopologyDocument) -> TopologyDiff:
    """Set/map difference keyed on mRID; diff with self is empty.

    The changed-name set lists attributes whose literals differ, counting
    an attribute present on only one side; a reclassified element
    contributes the pseudo-name ``class_name``.
    """
    diff = TopologyDiff()
    old_ids = set(old.elements)
    new_ids = set(new.elements)
    diff.added = new_ids - old_ids
    diff.removed = old_ids - new_ids
    for mrid in old_ids & new_ids:
        a = old.elements[mrid]
        b = new.elements[mrid]
        names: Set[str] = set()
        for attr in set(a.attribute_values) | set(b.attribute_values):
            if a.attribute_values.get(attr) != b.attribute_values.get(attr):
                names.add(attr)
        if a.class_name != b.class_name:
            names.add("class_name")
        if names:
            diff.changed[mrid] = names
    return diff
