"""Incremental OAI-PMH harvesting of remote log repositories.

Each harvest pulls one closed datestamp window per source: from just past
the stored watermark up to the second before the harvest started, so the
in-progress second is never read and a quiescent re-harvest fetches
nothing. Records merge into the local store with harvested provenance;
UUIDs already present are counted as duplicates and skipped, so retries
and overlapping sources are safe. The watermark only advances after a
fully successful pass.
"""

from __future__ import annotations

import logging
import time as time_module
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable

from .contextobject import (
    BadTimestamp,
    MissingIdentifierAttribute,
    XmlMalformed,
    parse_context_object,
)
from .model import InvalidEntity, format_timestamp, parse_timestamp, utc_now
from .oai_provider import METADATA_PREFIX, OAI_NS
from .store import DuplicateEventId, EventStore

__all__ = [
    "TransportError",
    "ProtocolError",
    "HarvestSource",
    "HarvestReport",
    "HttpClient",
    "harvest_source",
    "parse_source_list",
]

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
BACKOFF_BASE_SECONDS = 0.5


class TransportError(OSError):
    """The remote endpoint could not be reached after retries."""


class ProtocolError(ValueError):
    """The remote endpoint returned an OAI error we cannot recover from."""


@dataclass
class HarvestSource:
    base_url: str
    last_watermark: datetime | None = None
    enabled: bool = True

    def advance_watermark(self, candidate: datetime) -> None:
        if self.last_watermark is None or candidate > self.last_watermark:
            self.last_watermark = candidate


@dataclass
class HarvestReport:
    source: str
    fetched: int = 0
    new: int = 0
    duplicates: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    new_watermark: datetime | None = None


class HttpClient:
    """Minimal GET client; swap out in tests. Raises TransportError."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def get(self, url: str, params: dict[str, str]) -> str:
        import requests

        try:
            response = requests.get(url, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"GET {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"GET {url} returned HTTP {response.status_code}")
        return response.text


def _fetch_with_retries(
    client, url: str, params: dict[str, str], sleep: Callable[[float], None]
) -> str:
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            return client.get(url, params=params)
        except TransportError:
            if attempt == MAX_ATTEMPTS:
                raise
            delay = BACKOFF_BASE_SECONDS * 2 ** (attempt - 1)
            log.warning("transport failure talking to %s (attempt %d), retrying in %.1fs", url, attempt, delay)
            sleep(delay)
    raise AssertionError("unreachable")


def _oai(tag: str) -> str:
    return f"{{{OAI_NS}}}{tag}"


def _parse_datestamp(text: str) -> datetime:
    text = text.strip()
    if len(text) == 10:
        return parse_timestamp(text + "T00:00:00Z")
    return parse_timestamp(text)


@dataclass
class _Page:
    records: list[tuple[str, datetime, str | None]]  # (uuid, datestamp, metadata xml)
    resumption_token: str | None
    error_code: str | None
    error_message: str


def _parse_list_records(text: str) -> _Page:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ProtocolError(f"response is not well-formed XML: {exc}") from exc
    error = root.find(_oai("error"))
    if error is not None:
        return _Page([], None, error.get("code", "unknown"), (error.text or "").strip())
    container = root.find(_oai("ListRecords"))
    if container is None:
        raise ProtocolError("response has no ListRecords element")
    records = []
    for record in container.findall(_oai("record")):
        header = record.find(_oai("header"))
        if header is None:
            raise ProtocolError("record without header")
        identifier = header.findtext(_oai("identifier"), "").strip()
        datestamp = _parse_datestamp(header.findtext(_oai("datestamp"), ""))
        metadata = record.find(_oai("metadata"))
        payload = None
        if metadata is not None and len(metadata):
            payload = ET.tostring(metadata[0], encoding="unicode")
        records.append((identifier, datestamp, payload))
    token_elem = container.find(_oai("resumptionToken"))
    token = token_elem.text.strip() if token_elem is not None and token_elem.text else None
    return _Page(records, token, None, "")


def harvest_source(
    source: HarvestSource,
    store: EventStore,
    http_client=None,
    clock: Callable[[], datetime] = utc_now,
    sleep: Callable[[float], None] = time_module.sleep,
    reject_path: str | Path | None = None,
) -> HarvestReport:
    """Pull one source's new records and merge them into the store.

    Unparsable records are quarantined to the reject file and the harvest
    continues; a badResumptionToken mid-stream restarts the window once.
    """
    if not source.enabled:
        raise ValueError(f"source {source.base_url} is disabled")
    client = http_client or HttpClient()
    report = HarvestReport(source=source.base_url, new_watermark=source.last_watermark)

    window_from = None
    if source.last_watermark is not None:
        window_from = source.last_watermark + timedelta(seconds=1)
    window_until = clock() - timedelta(seconds=1)
    if window_from is not None and window_from > window_until:
        return report
    base_params = {
        "verb": "ListRecords",
        "metadataPrefix": METADATA_PREFIX,
        "until": format_timestamp(window_until),
    }
    if window_from is not None:
        base_params["from"] = format_timestamp(window_from)

    appended_this_run: set[str] = set()
    reject_fh = None
    restarted = False
    try:
        params = dict(base_params)
        page_no = 0
        max_seen: datetime | None = None
        while True:
            page_no += 1
            text = _fetch_with_retries(client, source.base_url, params, sleep)
            page = _parse_list_records(text)
            if page.error_code == "noRecordsMatch" and page_no == 1:
                break
            if page.error_code == "badResumptionToken" and not restarted:
                log.warning("badResumptionToken from %s, restarting window", source.base_url)
                restarted = True
                params = dict(base_params)
                page_no = 0
                max_seen = None
                report.fetched = report.new = report.duplicates = 0
                report.errors.clear()
                continue
            if page.error_code is not None:
                raise ProtocolError(f"{page.error_code}: {page.error_message}")

            for identifier, datestamp, payload in page.records:
                report.fetched += 1
                if max_seen is None or datestamp > max_seen:
                    max_seen = datestamp
                if store.contains(identifier) and identifier not in appended_this_run:
                    report.duplicates += 1
                    continue
                if payload is None:
                    report.errors.append((page_no, f"{identifier}: record has no metadata"))
                    continue
                try:
                    event = parse_context_object(payload)
                    store.append(event, provenance=source.base_url)
                except (
                    XmlMalformed,
                    MissingIdentifierAttribute,
                    BadTimestamp,
                    InvalidEntity,
                    DuplicateEventId,
                ) as exc:
                    report.errors.append((page_no, f"{identifier}: {exc}"))
                    if reject_path is not None:
                        if reject_fh is None:
                            reject_fh = open(reject_path, "a", encoding="utf-8")
                        reject_fh.write(payload.replace("\n", " ") + "\n")
                    continue
                appended_this_run.add(identifier)
                report.new += 1

            if page.resumption_token is None:
                break
            params = {"verb": "ListRecords", "resumptionToken": page.resumption_token}

        if max_seen is not None:
            source.advance_watermark(max_seen)
        report.new_watermark = source.last_watermark
    finally:
        if reject_fh is not None:
            reject_fh.close()
    return report


def parse_source_list(path: str | Path) -> list[HarvestSource]:
    """Source config: one base URL per line; `#` starts a comment."""
    sources = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                sources.append(HarvestSource(base_url=line))
    return sources
