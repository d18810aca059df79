"""Canonical XML ContextObject serialization and parsing.

One usage event <-> one `ctx:context-object` XML document. The canonical
form is a single line (control characters in text content are written as
character references), UTF-8, with fixed namespace prefixes, fixed element
order and fixed attribute order, so equal events serialize to identical
bytes and documents can be framed one per line.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import fields
from io import StringIO

from .model import (
    KNOWN_SERVICE_FLAGS,
    UUID_URN_RE,
    EntityDescriptor,
    ReferentMetadata,
    UsageEvent,
    format_timestamp,
    parse_timestamp,
)

__all__ = [
    "XmlMalformed",
    "MissingIdentifierAttribute",
    "BadTimestamp",
    "CTX_NS",
    "JOURNAL_NS",
    "SVC_NS",
    "serialize_context_object",
    "parse_context_object",
]

CTX_NS = "info:ofi/fmt:xml:xsd:ctx"
JOURNAL_NS = "info:ofi/fmt:xml:xsd:journal"
SVC_NS = "info:ofi/fmt:xml:xsd:sch_svc"

XML_DECL = '<?xml version="1.0" encoding="UTF-8"?>'

# Entity elements in canonical document order.
ENTITY_ORDER = (
    ("referent", "referent"),
    ("referring-entity", "referring_entity"),
    ("requester", "requester"),
    ("service-type", "service_type"),
    ("resolver", "resolver"),
    ("referrer", "referrer"),
)

METADATA_FIELD_ORDER = tuple(f.name for f in fields(ReferentMetadata))


class XmlMalformed(ValueError):
    """Input is not well-formed XML or not a context-object document."""


class MissingIdentifierAttribute(ValueError):
    """The context-object root lacks a usable `identifier` attribute."""


class BadTimestamp(ValueError):
    """A timestamp attribute is absent or not YYYY-MM-DDThh:mm:ssZ."""


def _escape(text: str, attr: bool = False) -> str:
    text = text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    if attr:
        text = text.replace('"', "&quot;")
    # Keep the canonical form on a single line.
    return text.replace("\r", "&#13;").replace("\n", "&#10;").replace("\t", "&#9;")


def _write_entity(out: StringIO, name: str, entity: EntityDescriptor) -> None:
    out.write(f"<ctx:{name}>")
    for ident in entity.identifiers:
        out.write(f"<ctx:identifier>{_escape(ident)}</ctx:identifier>")
    if entity.metadata is not None:
        out.write("<ctx:metadata-by-val>")
        out.write(f"<ctx:format>{JOURNAL_NS}</ctx:format>")
        out.write(f'<ctx:metadata><jou:journal xmlns:jou="{JOURNAL_NS}">')
        for field_name in METADATA_FIELD_ORDER:
            value = getattr(entity.metadata, field_name)
            if value is not None:
                out.write(f"<jou:{field_name}>{_escape(value)}</jou:{field_name}>")
        out.write("</jou:journal></ctx:metadata>")
        out.write("</ctx:metadata-by-val>")
    if entity.private_data is not None:
        out.write(f"<ctx:private-data>{_escape(entity.private_data)}</ctx:private-data>")
    out.write(f"</ctx:{name}>")


def _write_service_type(out: StringIO, flags: frozenset[str]) -> None:
    out.write("<ctx:service-type>")
    out.write("<ctx:metadata-by-val>")
    out.write(f"<ctx:format>{SVC_NS}</ctx:format>")
    out.write(f'<ctx:metadata><svc:services xmlns:svc="{SVC_NS}">')
    known = [f for f in KNOWN_SERVICE_FLAGS if f in flags]
    other = sorted(f for f in flags if f not in KNOWN_SERVICE_FLAGS)
    for flag in known + other:
        out.write(f"<svc:{flag}>yes</svc:{flag}>")
    out.write("</svc:services></ctx:metadata>")
    out.write("</ctx:metadata-by-val>")
    out.write("</ctx:service-type>")


def serialize_context_object(event: UsageEvent) -> str:
    """Serialize a usage event to its canonical XML document (one line)."""
    out = StringIO()
    out.write(XML_DECL)
    out.write(
        f'<ctx:context-object xmlns:ctx="{CTX_NS}"'
        f' timestamp="{format_timestamp(event.event_timestamp)}"'
        f' identifier="{_escape(event.event_id, attr=True)}">'
    )
    for element_name, attr_name in ENTITY_ORDER:
        if attr_name == "service_type":
            if event.service_type:
                _write_service_type(out, event.service_type)
            continue
        entity = getattr(event, attr_name)
        if entity is None or entity.is_empty():
            continue
        _write_entity(out, element_name, entity)
    out.write("</ctx:context-object>")
    return out.getvalue()


def _tag(namespace: str, local: str) -> str:
    return f"{{{namespace}}}{local}"


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _element_to_text(elem: ET.Element) -> str:
    # Raw XML of a foreign subtree, preserved into private_data.
    return ET.tostring(elem, encoding="unicode")


def _parse_journal_metadata(elem: ET.Element) -> ReferentMetadata | None:
    values: dict[str, str] = {}
    for child in elem:
        name = _local_name(child.tag)
        if name in METADATA_FIELD_ORDER and name not in values:
            values[name] = child.text or ""
    if not values:
        return None
    return ReferentMetadata(**values)


def _parse_entity(elem: ET.Element, where: str) -> EntityDescriptor:
    identifiers: list[str] = []
    metadata: ReferentMetadata | None = None
    private_parts: list[str] = []
    for child in elem:
        name = _local_name(child.tag)
        if name == "identifier":
            identifiers.append((child.text or "").strip())
        elif name == "private-data":
            if child.text:
                private_parts.append(child.text)
        elif name == "metadata-by-val":
            fmt = child.find(_tag(CTX_NS, "format"))
            payload = child.find(_tag(CTX_NS, "metadata"))
            fmt_uri = (fmt.text or "").strip() if fmt is not None else ""
            journal = None
            if payload is not None and fmt_uri == JOURNAL_NS:
                journal = payload.find(_tag(JOURNAL_NS, "journal"))
                # tolerate metadata fields placed directly under ctx:metadata
                if journal is None and any(
                    _local_name(c.tag) in METADATA_FIELD_ORDER for c in payload
                ):
                    journal = payload
            if journal is not None and metadata is None:
                metadata = _parse_journal_metadata(journal)
            else:
                # Unregistered format or a second metadata block: preserve.
                private_parts.append(_element_to_text(child))
        else:
            # Unknown element in a known entity slot: preserve, never drop.
            private_parts.append(_element_to_text(child))
    private = "\n".join(p for p in private_parts if p) or None
    return EntityDescriptor(tuple(identifiers), metadata, private)


def _parse_service_type(elem: ET.Element) -> tuple[frozenset[str], str | None]:
    flags: set[str] = set()
    private_parts: list[str] = []
    for mbv in elem:
        if _local_name(mbv.tag) != "metadata-by-val":
            private_parts.append(_element_to_text(mbv))
            continue
        payload = mbv.find(_tag(CTX_NS, "metadata"))
        if payload is None:
            continue
        # Flags may sit under a svc:services wrapper or directly under
        # ctx:metadata (the published samples elide the wrapper).
        candidates: list[ET.Element] = []
        for child in payload:
            if _local_name(child.tag) == "services":
                candidates.extend(list(child))
            else:
                candidates.append(child)
        for child in candidates:
            if (child.text or "").strip().lower() == "yes":
                flags.add(_local_name(child.tag))
            else:
                private_parts.append(_element_to_text(child))
    return frozenset(flags), ("\n".join(p for p in private_parts if p) or None)


def parse_context_object(text: str | bytes) -> UsageEvent:
    """Parse an XML ContextObject document back into a usage event.

    Unknown elements and unregistered metadata formats in known entity
    slots are preserved into the owning entity's private_data.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlMalformed(f"context-object document: {exc}") from exc
    if root.tag != _tag(CTX_NS, "context-object"):
        raise XmlMalformed(f"root element is {root.tag!r}, expected ctx:context-object")

    event_id = root.get("identifier")
    if event_id is None or not event_id.strip():
        raise MissingIdentifierAttribute("context-object root: no identifier attribute")
    event_id = event_id.strip()
    if not UUID_URN_RE.match(event_id):
        raise MissingIdentifierAttribute(
            f"context-object root: identifier is not a UUID URN: {event_id!r}"
        )

    ts_text = root.get("timestamp")
    if ts_text is None:
        raise BadTimestamp("context-object root: no timestamp attribute")
    try:
        timestamp = parse_timestamp(ts_text.strip())
    except ValueError as exc:
        raise BadTimestamp(f"context-object root: {exc}") from exc

    entities: dict[str, EntityDescriptor | None] = {
        "referent": None,
        "referring_entity": None,
        "requester": None,
        "resolver": None,
        "referrer": None,
    }
    service_flags: frozenset[str] = frozenset()
    service_private: str | None = None
    by_element = {name: attr for name, attr in ENTITY_ORDER}
    for child in root:
        name = _local_name(child.tag)
        attr = by_element.get(name)
        if attr is None:
            continue
        if attr == "service_type":
            service_flags, service_private = _parse_service_type(child)
        else:
            entities[attr] = _parse_entity(child, name)

    referent = entities["referent"] or EntityDescriptor()
    if service_private:
        # No private slot exists on the flag set; keep it on the referent so
        # nothing is dropped silently.
        merged = "\n".join(p for p in (referent.private_data, service_private) if p)
        referent = EntityDescriptor(referent.identifiers, referent.metadata, merged)

    return UsageEvent(
        event_id=event_id,
        event_timestamp=timestamp,
        referent=referent,
        requester=entities["requester"] or EntityDescriptor(),
        service_type=service_flags,
        resolver=entities["resolver"] or EntityDescriptor(),
        referrer=entities["referrer"] or EntityDescriptor(),
        referring_entity=entities["referring_entity"],
    )
