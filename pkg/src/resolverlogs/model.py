"""Core data model for linking-server usage events.

A usage event is one OpenURL service request seen by an institutional
linking server: the requested item (referent), the requesting agent, the
moment of the request, and the surrounding service context. All types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import re
import uuid as uuidlib
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from typing import Callable

__all__ = [
    "InvalidEntity",
    "ReferentMetadata",
    "EntityDescriptor",
    "UsageEvent",
    "KNOWN_SERVICE_FLAGS",
    "create_event",
    "new_uuid_urn",
    "utc_now",
    "format_timestamp",
    "parse_timestamp",
]

# Service flags with a fixed position in the canonical serialization.
# Anything else is carried verbatim as an "other" flag token.
KNOWN_SERVICE_FLAGS = ("full-text", "abstract", "citation", "holding")

UUID_URN_RE = re.compile(
    r"^urn:uuid:[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}"
    r"-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$",
    re.IGNORECASE,
)
ISSN_RE = re.compile(r"^\d{4}-\d{3}[\dX]$")
TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")
# Flag tokens must be usable as XML element names.
FLAG_TOKEN_RE = re.compile(r"^[A-Za-z][A-Za-z0-9._-]*$")


class InvalidEntity(ValueError):
    """The caller supplied an entity that cannot describe a usable request."""


@dataclass(frozen=True)
class ReferentMetadata:
    """Journal-article style metadata for a referent.

    All fields optional; `issn` must look like NNNN-NNN[0-9X] and `date`
    must start with a 4-digit year when present.
    """

    genre: str | None = None
    atitle: str | None = None
    jtitle: str | None = None
    issn: str | None = None
    volume: str | None = None
    issue: str | None = None
    spage: str | None = None
    epage: str | None = None
    date: str | None = None
    doi: str | None = None

    def is_empty(self) -> bool:
        return all(getattr(self, f.name) is None for f in fields(self))

    def validate(self) -> None:
        if self.issn is not None and not ISSN_RE.match(self.issn):
            raise InvalidEntity(f"malformed issn: {self.issn!r}")
        if self.date is not None and not re.match(r"^\d{4}", self.date):
            raise InvalidEntity(f"date must start with a 4-digit year: {self.date!r}")


@dataclass(frozen=True)
class EntityDescriptor:
    """One ContextObject entity: identifiers, optional metadata, private data.

    Metadata is only meaningful on the referent; private_data carries
    opaque text (including foreign XML preserved during parsing).
    """

    identifiers: tuple[str, ...] = ()
    metadata: ReferentMetadata | None = None
    private_data: str | None = None

    def is_empty(self) -> bool:
        return not self.identifiers and self.metadata is None and self.private_data is None

    def validate(self) -> None:
        for ident in self.identifiers:
            if not ident or re.search(r"\s", ident):
                raise InvalidEntity(f"identifier empty or contains whitespace: {ident!r}")
        if self.metadata is not None:
            self.metadata.validate()


@dataclass(frozen=True)
class UsageEvent:
    """One linking-server service request with its full context.

    `event_id` is a UUID URN (`urn:UUID:...`), unique within any store;
    `event_timestamp` is a UTC instant at seconds precision.
    """

    event_id: str
    event_timestamp: datetime
    referent: EntityDescriptor
    requester: EntityDescriptor
    service_type: frozenset[str]
    resolver: EntityDescriptor
    referrer: EntityDescriptor
    referring_entity: EntityDescriptor | None = None

    def validate(self) -> None:
        if not UUID_URN_RE.match(self.event_id):
            raise InvalidEntity(f"event_id is not a UUID URN: {self.event_id!r}")
        if self.event_timestamp.utcoffset() not in (None, timezone.utc.utcoffset(None)):
            raise InvalidEntity("event_timestamp must be UTC")
        if self.referent.is_empty():
            raise InvalidEntity("referent has no identifier and no metadata")
        self.referent.validate()
        self.requester.validate()
        self.resolver.validate()
        self.referrer.validate()
        if self.referring_entity is not None:
            self.referring_entity.validate()
        for flag in self.service_type:
            if not FLAG_TOKEN_RE.match(flag):
                raise InvalidEntity(f"service flag is not a valid token: {flag!r}")


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def new_uuid_urn() -> str:
    return f"urn:UUID:{uuidlib.uuid4()}"


def format_timestamp(dt: datetime) -> str:
    """Render a UTC datetime as YYYY-MM-DDThh:mm:ssZ."""
    return (
        f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
        f"T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}Z"
    )


def parse_timestamp(text: str) -> datetime:
    """Parse a YYYY-MM-DDThh:mm:ssZ timestamp; raises ValueError otherwise."""
    if not TIMESTAMP_RE.match(text):
        raise ValueError(f"bad timestamp: {text!r}")
    return datetime(
        int(text[0:4]),
        int(text[5:7]),
        int(text[8:10]),
        int(text[11:13]),
        int(text[14:16]),
        int(text[17:19]),
        tzinfo=timezone.utc,
    )


def _normalize_entity(entity: EntityDescriptor) -> EntityDescriptor:
    # Empty metadata blocks are indistinguishable from absent ones in the
    # serialization, so collapse them at construction time.
    if entity.metadata is not None and entity.metadata.is_empty():
        entity = EntityDescriptor(entity.identifiers, None, entity.private_data)
    return entity


def create_event(
    referent: EntityDescriptor,
    requester: EntityDescriptor,
    service_type: frozenset[str] | set[str],
    resolver: EntityDescriptor,
    referrer: EntityDescriptor,
    referring_entity: EntityDescriptor | None = None,
    clock: Callable[[], datetime] = utc_now,
    id_source: Callable[[], str] = new_uuid_urn,
) -> UsageEvent:
    """Record one service request as a usage event.

    The event gets a fresh UUID URN from `id_source` and its timestamp from
    `clock` (UTC, truncated to seconds); entities are stored verbatim.
    Raises InvalidEntity when the referent carries neither an identifier
    nor metadata.
    """
    referent = _normalize_entity(referent)
    if referent.is_empty():
        raise InvalidEntity("referent has no identifier and no metadata")
    if referring_entity is not None:
        referring_entity = _normalize_entity(referring_entity)
        if referring_entity.is_empty():
            referring_entity = None
    ts = clock()
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc).replace(microsecond=0)
    event = UsageEvent(
        event_id=id_source(),
        event_timestamp=ts,
        referent=referent,
        requester=_normalize_entity(requester),
        service_type=frozenset(service_type),
        resolver=_normalize_entity(resolver),
        referrer=_normalize_entity(referrer),
        referring_entity=referring_entity,
    )
    event.validate()
    return event
