"""Versioned CIM class library parsed from an XMI file.

The library answers two questions the rest of the gateway keeps asking:
which attributes does a device class carry (own plus inherited), and what
primitive kind does each attribute ultimately hold.  CIM stores attribute
types behind named datatype classes (e.g. ``ratedCurrent`` is a
``CurrentFlow`` whose ``value`` is a Float), so type lookup is a two-step
walk: declared type -> datatype -> value kind.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple
from xml.etree import ElementTree as ET

from .errors import (
    DanglingSuperclass,
    DuplicateClass,
    InheritanceCycle,
    MalformedXml,
    UnknownClass,
    UnknownKind,
    UnknownType,
)


class PrimitiveKind(Enum):
    FLOAT = "Float"
    INTEGER = "Integer"
    BOOLEAN = "Boolean"
    STRING = "String"
    DATETIME = "DateTime"

    @classmethod
    def from_name(cls, name: str) -> Optional["PrimitiveKind"]:
        for kind in cls:
            if kind.value == name:
                return kind
        return None

    def __str__(self):
        return self.value


MULTIPLICITY_ONE = "one"
MULTIPLICITY_OPTIONAL = "optional"


@dataclass(frozen=True)
class CimAttribute:
    name: str
    declared_type: str
    multiplicity: str = MULTIPLICITY_OPTIONAL


@dataclass(frozen=True)
class CimDatatype:
    name: str
    value_kind: PrimitiveKind


@dataclass(frozen=True)
class CimClass:
    name: str
    superclass: Optional[str] = None
    own_attributes: Tuple[CimAttribute, ...] = ()
    references: Tuple[Tuple[str, str], ...] = ()  # (role, target class)


@dataclass(frozen=True)
class CimLibrary:
    """Immutable after construction; safe to share across threads."""

    version: str
    classes: Dict[str, CimClass]
    datatypes: Dict[str, CimDatatype]


@dataclass(frozen=True)
class TagNameMap:
    """Which XMI tag and attribute names carry the model.

    Libraries from different exporters shuffle these names around; the map
    makes those tweaks configuration instead of code changes.  Tags are
    matched on their local (namespace-stripped) name at any nesting depth.
    """

    class_tag: str = "Class"
    datatype_tag: str = "DataType"
    attribute_tag: str = "Attribute"
    reference_tag: str = "Reference"
    name_attr: str = "name"
    superclass_attr: str = "superclass"
    type_attr: str = "type"
    multiplicity_attr: str = "multiplicity"
    role_attr: str = "role"
    target_attr: str = "target"
    version_attr: str = "version"
    datatype_value_attr: str = "value"

    @classmethod
    def from_dict(cls, overrides: dict) -> "TagNameMap":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(overrides) - known
        if bad:
            raise MalformedXml(f"unknown tag-name overrides: {sorted(bad)}")
        return cls(**overrides)


@dataclass
class AttributeChanges:
    added: Tuple[str, ...] = ()
    removed: Tuple[str, ...] = ()
    retyped: Tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.retyped)


@dataclass
class LibraryDiff:
    added_classes: frozenset
    removed_classes: frozenset
    changed_classes: Dict[str, AttributeChanges]

    def is_empty(self) -> bool:
        return not (self.added_classes or self.removed_classes or self.changed_classes)


def local_name(tag: str) -> str:
    """Strip an ElementTree ``{namespace}local`` tag down to ``local``."""
    if tag.startswith("{"):
        return tag.split("}", 1)[1]
    return tag


def load_library(xmi_bytes: bytes, tag_map: TagNameMap = TagNameMap()) -> CimLibrary:
    """Parse a CIM class library from XMI bytes.

    The version is taken from the root element when present, otherwise from
    a content hash, so two loads of the same bytes always compare equal.
    """
    try:
        root = ET.fromstring(xmi_bytes)
    except ET.ParseError as exc:
        raise MalformedXml(f"not well-formed XML: {exc}") from exc

    classes: Dict[str, CimClass] = {}
    datatypes: Dict[str, CimDatatype] = {}

    for node in root.iter():
        tag = local_name(node.tag)
        if tag == tag_map.class_tag:
            cim_class = _parse_class(node, tag_map)
            if cim_class.name in classes:
                raise DuplicateClass(cim_class.name)
            classes[cim_class.name] = cim_class
        elif tag == tag_map.datatype_tag:
            datatype = _parse_datatype(node, tag_map)
            if datatype.name in datatypes:
                raise DuplicateClass(datatype.name)
            if PrimitiveKind.from_name(datatype.name) is not None:
                raise MalformedXml(f"datatype {datatype.name!r} shadows a primitive kind")
            datatypes[datatype.name] = datatype

    for cim_class in classes.values():
        if cim_class.superclass is not None and cim_class.superclass not in classes:
            raise DanglingSuperclass(cim_class.name, cim_class.superclass)
    _check_acyclic(classes)

    version = root.get(tag_map.version_attr)
    if not version:
        version = hashlib.sha256(xmi_bytes).hexdigest()[:12]
    return CimLibrary(version=version, classes=classes, datatypes=datatypes)


def _parse_class(node, tag_map: TagNameMap) -> CimClass:
    name = node.get(tag_map.name_attr)
    if not name:
        raise MalformedXml("class element without a name")
    superclass = node.get(tag_map.superclass_attr) or None

    attributes: List[CimAttribute] = []
    seen = set()
    references: List[Tuple[str, str]] = []
    for child in node:
        child_tag = local_name(child.tag)
        if child_tag == tag_map.attribute_tag:
            attr = _parse_attribute(child, tag_map, owner=name)
            if attr.name in seen:
                raise MalformedXml(f"class {name!r} declares attribute {attr.name!r} twice")
            seen.add(attr.name)
            attributes.append(attr)
        elif child_tag == tag_map.reference_tag:
            role = child.get(tag_map.role_attr)
            target = child.get(tag_map.target_attr)
            if not role or not target:
                raise MalformedXml(f"reference in class {name!r} needs role and target")
            references.append((role, target))
    return CimClass(
        name=name,
        superclass=superclass,
        own_attributes=tuple(attributes),
        references=tuple(references),
    )


def _parse_attribute(node, tag_map: TagNameMap, owner: str) -> CimAttribute:
    name = node.get(tag_map.name_attr)
    declared_type = node.get(tag_map.type_attr)
    if not name or not declared_type:
        raise MalformedXml(f"attribute in {owner!r} needs name and type")
    multiplicity = node.get(tag_map.multiplicity_attr) or MULTIPLICITY_OPTIONAL
    if multiplicity not in (MULTIPLICITY_ONE, MULTIPLICITY_OPTIONAL):
        raise MalformedXml(f"attribute {owner}.{name}: bad multiplicity {multiplicity!r}")
    return CimAttribute(name=name, declared_type=declared_type, multiplicity=multiplicity)


def _parse_datatype(node, tag_map: TagNameMap) -> CimDatatype:
    name = node.get(tag_map.name_attr)
    if not name:
        raise MalformedXml("datatype element without a name")
    # In CIM profiles a datatype is a tiny class whose "value" attribute
    # carries the primitive kind; unit/multiplier siblings are ignored.
    kind_name = None
    for child in node:
        if local_name(child.tag) != tag_map.attribute_tag:
            continue
        if child.get(tag_map.name_attr) == tag_map.datatype_value_attr:
            kind_name = child.get(tag_map.type_attr)
            break
    if kind_name is None:
        raise UnknownKind(name, None)
    kind = PrimitiveKind.from_name(kind_name)
    if kind is None:
        raise UnknownKind(name, kind_name)
    return CimDatatype(name=name, value_kind=kind)


def _check_acyclic(classes: Dict[str, CimClass]) -> None:
    for start in classes:
        seen = set()
        current: Optional[str] = start
        while current is not None:
            if current in seen:
                raise InheritanceCycle(current)
            seen.add(current)
            current = classes[current].superclass


def lineage(lib: CimLibrary, class_name: str) -> List[CimClass]:
    """Inheritance chain for a class, root ancestor first."""
    if class_name not in lib.classes:
        raise UnknownClass(class_name)
    chain: List[CimClass] = []
    current: Optional[str] = class_name
    while current is not None:
        chain.append(lib.classes[current])
        current = lib.classes[current].superclass
    chain.reverse()
    return chain


def resolve_attributes(lib: CimLibrary, class_name: str) -> List[CimAttribute]:
    """All attributes of a class: own plus inherited, root ancestor first.

    Each name appears exactly once.  A redeclaration in a subclass replaces
    the ancestor's attribute but keeps the ancestor's position, so column
    order stays stable when a subclass narrows a type.
    """
    resolved: List[CimAttribute] = []
    index: Dict[str, int] = {}
    for cim_class in lineage(lib, class_name):
        for attr in cim_class.own_attributes:
            if attr.name in index:
                resolved[index[attr.name]] = attr
            else:
                index[attr.name] = len(resolved)
                resolved.append(attr)
    return resolved


def resolve_references(lib: CimLibrary, class_name: str) -> List[Tuple[str, str]]:
    """Reference roles of a class including inherited ones, root first."""
    roles: List[Tuple[str, str]] = []
    seen = set()
    for cim_class in lineage(lib, class_name):
        for role, target in cim_class.references:
            if role not in seen:
                seen.add(role)
                roles.append((role, target))
    return roles


def resolve_type(lib: CimLibrary, attr: CimAttribute) -> PrimitiveKind:
    """Primitive kind of an attribute, following the datatype indirection."""
    kind = PrimitiveKind.from_name(attr.declared_type)
    if kind is not None:
        return kind
    datatype = lib.datatypes.get(attr.declared_type)
    if datatype is not None:
        return datatype.value_kind
    raise UnknownType(attr.declared_type)


def _resolved_kind(lib: CimLibrary, attr: CimAttribute) -> Optional[PrimitiveKind]:
    try:
        return resolve_type(lib, attr)
    except UnknownType:
        return None


def diff_libraries(old: CimLibrary, new: CimLibrary) -> LibraryDiff:
    """Exact class-set and resolved-attribute differences between versions.

    Attribute comparison runs on the post-inheritance lists, so removing an
    attribute from a base class shows up in every surviving subclass.
    """
    old_names = set(old.classes)
    new_names = set(new.classes)
    changed: Dict[str, AttributeChanges] = {}
    for name in sorted(old_names & new_names):
        old_attrs = {a.name: a for a in resolve_attributes(old, name)}
        new_attrs = {a.name: a for a in resolve_attributes(new, name)}
        added = tuple(sorted(set(new_attrs) - set(old_attrs)))
        removed = tuple(sorted(set(old_attrs) - set(new_attrs)))
        retyped = tuple(sorted(
            attr_name
            for attr_name in set(old_attrs) & set(new_attrs)
            if old_attrs[attr_name].declared_type != new_attrs[attr_name].declared_type
            or _resolved_kind(old, old_attrs[attr_name]) != _resolved_kind(new, new_attrs[attr_name])
        ))
        change = AttributeChanges(added=added, removed=removed, retyped=retyped)
        if not change.is_empty():
            changed[name] = change
    return LibraryDiff(
        added_classes=frozenset(new_names - old_names),
        removed_classes=frozenset(old_names - new_names),
        changed_classes=changed,
    )


def parse_literal(kind: PrimitiveKind, literal: str):
    """Coerce a document literal to a Python value of the given kind.

    Raises ValueError when the literal does not conform; String always does.
    """
    if kind is PrimitiveKind.STRING:
        return literal
    text = literal.strip()
    if kind is PrimitiveKind.FLOAT:
        return float(text)
    if kind is PrimitiveKind.INTEGER:
        return int(text)
    if kind is PrimitiveKind.BOOLEAN:
        lowered = text.lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        raise ValueError(f"not a boolean literal: {literal!r}")
    if kind is PrimitiveKind.DATETIME:
        from datetime import datetime

        return datetime.fromisoformat(text.replace("Z", "+00:00"))
    raise ValueError(f"unsupported kind {kind!r}")


def literal_conforms(kind: PrimitiveKind, literal: str) -> bool:
    try:
        parse_literal(kind, literal)
        return True
    except ValueError:
        return False
