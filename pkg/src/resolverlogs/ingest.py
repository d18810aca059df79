"""Raw linking-server log ingestion.

A raw log line is 5 tab-separated fields: timestamp, requester, service,
resolver, and an OpenURL 0.1 key/encoded-value query. Lines parse into
usage events; rejects are written to a side file with reasons.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable
from urllib.parse import quote_plus, unquote_plus

from .contextobject import BadTimestamp
from .model import (
    EntityDescriptor,
    InvalidEntity,
    ReferentMetadata,
    UsageEvent,
    create_event,
    format_timestamp,
    new_uuid_urn,
    parse_timestamp,
    utc_now,
)

__all__ = [
    "EmptyQuery",
    "UnbalancedEncoding",
    "MalformedLine",
    "RawLogLine",
    "KevParse",
    "IngestReport",
    "parse_kev_openurl",
    "split_log_line",
    "format_log_line",
    "parse_log_line",
    "log_line_from_event",
    "ingest_file",
]


class EmptyQuery(ValueError):
    """The KEV query string is empty."""


class UnbalancedEncoding(ValueError):
    """The KEV query contains an invalid percent escape."""


class MalformedLine(ValueError):
    """A raw log line does not have exactly 5 tab-separated fields."""


# Keys consumed into metadata/identifiers; order fixed for normalization.
KEV_KEY_ORDER = (
    "genre",
    "atitle",
    "title",
    "jtitle",
    "issn",
    "volume",
    "issue",
    "spage",
    "epage",
    "date",
    "id",
    "sid",
)

SERVICE_ALIASES = {
    "fulltext": "full-text",
    "full-text": "full-text",
    "full_text": "full-text",
    "abstract": "abstract",
    "citation": "citation",
    "holding": "holding",
    "holdings": "holding",
}

_BAD_ESCAPE_RE = re.compile(r"%(?![0-9A-Fa-f]{2})")
_FLAG_SAFE_RE = re.compile(r"^[A-Za-z][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class RawLogLine:
    timestamp: datetime
    requester: str
    service: str
    resolver: str
    kev_query: str


@dataclass
class KevParse:
    metadata: ReferentMetadata
    identifiers: tuple[str, ...]
    referrer_sid: str | None
    unknown: dict[str, str] = field(default_factory=dict)
    unknown_count: int = 0
    warnings: list[str] = field(default_factory=list)


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    reject_path: Path | None = None


def _identifier_from_id_value(value: str, out: list[str], warnings: list[str]) -> None:
    """Map an OpenURL `id` value to a URI identifier."""
    if value.startswith("doi:"):
        out.append(f"info:doi/{value[len('doi:') :]}")
    elif re.match(r"^[A-Za-z][A-Za-z0-9+.-]*:", value):
        out.append(value)
    else:
        warnings.append(f"id value without scheme ignored: {value!r}")


def parse_kev_openurl(kev_query: str) -> KevParse:
    """Decode an OpenURL 0.1 KEV query into referent metadata, referent
    identifiers and the referrer sid.

    Unknown keys are kept (first value) and counted; repeated keys keep the
    first value with a warning. Raises EmptyQuery / UnbalancedEncoding.
    """
    if not kev_query:
        raise EmptyQuery("empty KEV query")
    match = _BAD_ESCAPE_RE.search(kev_query)
    if match:
        raise UnbalancedEncoding(f"invalid percent escape at offset {match.start()}")
    values: dict[str, str] = {}
    unknown: dict[str, str] = {}
    unknown_count = 0
    warnings: list[str] = []
    for segment in kev_query.split("&"):
        if not segment:
            continue
        key, _, raw_value = segment.partition("=")
        key = unquote_plus(key).strip()
        value = unquote_plus(raw_value)
        if key in KEV_KEY_ORDER:
            if not value:
                continue
            if key in values:
                warnings.append(f"repeated key {key!r}: first value wins")
            else:
                values[key] = value
        else:
            unknown_count += 1
            if key in unknown:
                warnings.append(f"repeated key {key!r}: first value wins")
            else:
                unknown[key] = value

    identifiers: list[str] = []
    if "id" in values:
        _identifier_from_id_value(values["id"], identifiers, warnings)
    metadata = ReferentMetadata(
        genre=values.get("genre"),
        atitle=values.get("atitle"),
        jtitle=values.get("jtitle") or values.get("title"),
        issn=values.get("issn"),
        volume=values.get("volume"),
        issue=values.get("issue"),
        spage=values.get("spage"),
        epage=values.get("epage"),
        date=values.get("date"),
    )
    return KevParse(
        metadata=metadata,
        identifiers=tuple(identifiers),
        referrer_sid=values.get("sid"),
        unknown=unknown,
        unknown_count=unknown_count,
        warnings=warnings,
    )


def split_log_line(line: str) -> RawLogLine:
    """Split one raw line into its 5 tab-separated fields."""
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise MalformedLine(f"expected 5 tab-separated fields, got {len(parts)}")
    try:
        timestamp = parse_timestamp(parts[0].strip())
    except ValueError as exc:
        raise BadTimestamp(f"log line timestamp: {exc}") from exc
    return RawLogLine(
        timestamp=timestamp,
        requester=parts[1].strip(),
        service=parts[2].strip(),
        resolver=parts[3].strip(),
        kev_query=parts[4].strip(),
    )


def _normalized_kev(kev: KevParse, raw_jtitle_key: str = "title") -> str:
    pairs: list[tuple[str, str]] = []
    md = kev.metadata
    for key in KEV_KEY_ORDER:
        if key == "title":
            if md.jtitle is not None:
                pairs.append((raw_jtitle_key, md.jtitle))
        elif key == "jtitle":
            continue
        elif key == "id":
            for ident in kev.identifiers:
                if ident.startswith("info:doi/"):
                    pairs.append(("id", "doi:" + ident[len("info:doi/") :]))
                else:
                    pairs.append(("id", ident))
        elif key == "sid":
            if kev.referrer_sid is not None:
                pairs.append(("sid", kev.referrer_sid))
        else:
            value = getattr(md, key, None)
            if value is not None:
                pairs.append((key, value))
    for key in sorted(kev.unknown):
        pairs.append((key, kev.unknown[key]))
    return "&".join(f"{quote_plus(k)}={quote_plus(v)}" for k, v in pairs)


def format_log_line(raw: RawLogLine) -> str:
    """Render a RawLogLine back to text with the KEV part normalized
    (fixed key order, fixed percent encoding)."""
    kev = parse_kev_openurl(raw.kev_query)
    return "\t".join(
        [
            format_timestamp(raw.timestamp),
            raw.requester,
            raw.service,
            raw.resolver,
            _normalized_kev(kev),
        ]
    )


def _service_flag(service: str) -> str:
    flag = SERVICE_ALIASES.get(service.lower())
    if flag:
        return flag
    token = re.sub(r"[^A-Za-z0-9._-]+", "-", service.lower()).strip("-.")
    return token if _FLAG_SAFE_RE.match(token) else "other"


def parse_log_line(
    line: str,
    default_resolver: str = "",
    id_source: Callable[[], str] = new_uuid_urn,
) -> UsageEvent:
    """Build a usage event from one raw log line (fresh UUID).

    The requester becomes `urn:ip:<addr>` unless it already is a URN; the
    service text maps onto a service flag (unknown text is carried as an
    "other" flag token).
    """
    raw = split_log_line(line)
    kev = parse_kev_openurl(raw.kev_query)
    requester = raw.requester if raw.requester.startswith("urn:") else f"urn:ip:{raw.requester}"
    resolver = raw.resolver or default_resolver
    referrer = f"info:sid/{kev.referrer_sid}" if kev.referrer_sid else None
    metadata = None if kev.metadata.is_empty() else kev.metadata
    return create_event(
        referent=EntityDescriptor(kev.identifiers, metadata),
        requester=EntityDescriptor((requester,)),
        service_type=frozenset({_service_flag(raw.service)}),
        resolver=EntityDescriptor((resolver,) if resolver else ()),
        referrer=EntityDescriptor((referrer,) if referrer else ()),
        clock=lambda: raw.timestamp,
        id_source=id_source,
    )


def log_line_from_event(event: UsageEvent) -> str:
    """Render an event back into the raw 5-field log format (one service
    flag; DOI identifiers and the referrer sid fold into the KEV part)."""
    md = event.referent.metadata or ReferentMetadata()
    sid = None
    for ident in event.referrer.identifiers:
        if ident.startswith("info:sid/"):
            sid = ident[len("info:sid/") :]
            break
    kev = KevParse(metadata=md, identifiers=event.referent.identifiers, referrer_sid=sid)
    requester = event.requester.identifiers[0] if event.requester.identifiers else ""
    if requester.startswith("urn:ip:"):
        requester = requester[len("urn:ip:") :]
    service = sorted(event.service_type)[0] if event.service_type else "other"
    if service == "full-text":
        service = "fulltext"
    resolver = event.resolver.identifiers[0] if event.resolver.identifiers else ""
    return "\t".join(
        [
            format_timestamp(event.event_timestamp),
            requester,
            service,
            resolver,
            _normalized_kev(kev),
        ]
    )


def ingest_file(
    path: str | Path,
    store,
    default_resolver: str = "",
    reject_path: str | Path | None = None,
) -> IngestReport:
    """Parse a raw log file and append the events to the store.

    Malformed lines go to `<input>.rejects` with a reason; parsing
    continues. Returns accepted/rejected counts.
    """
    path = Path(path)
    reject_path = Path(reject_path) if reject_path else path.with_name(path.name + ".rejects")
    report = IngestReport(reject_path=reject_path)
    reject_fh = None
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    event = parse_log_line(line, default_resolver)
                    store.append(event)
                except (
                    MalformedLine,
                    BadTimestamp,
                    EmptyQuery,
                    UnbalancedEncoding,
                    InvalidEntity,
                ) as exc:
                    if reject_fh is None:
                        reject_fh = open(reject_path, "w", encoding="utf-8")
                    reject_fh.write(f"# line {lineno}: {type(exc).__name__}: {exc}\n")
                    reject_fh.write(line if line.endswith("\n") else line + "\n")
                    report.rejected += 1
                else:
                    report.accepted += 1
    finally:
        if reject_fh is not None:
            reject_fh.close()
    return report
