"""Durable append-only store of usage events.

One writer, many readers. Records never change once appended: storage is a
single append log (one tab-separated frame per line: upload datestamp,
provenance, canonical ContextObject XML; safe because the canonical form
escapes all control characters) plus two in-memory indexes, by UUID and by
(datestamp, UUID). Recovery is a sequential scan; torn trailing bytes from
a crash are truncated away.
"""

from __future__ import annotations

import os
import re
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterator

from .contextobject import parse_context_object, serialize_context_object
from .model import UsageEvent, format_timestamp, parse_timestamp, utc_now

__all__ = [
    "LOCAL",
    "DuplicateEventId",
    "StorageFailure",
    "BadCursor",
    "StoredRecord",
    "DatestampPage",
    "EventStore",
]

# Provenance is either LOCAL or the base URL of the repository a record was
# harvested from.
LOCAL = "local"


class DuplicateEventId(ValueError):
    """Same UUID already stored with differing content."""


class StorageFailure(OSError):
    """The append log could not be written."""


class BadCursor(ValueError):
    """A range cursor is malformed or inconsistent."""


@dataclass(frozen=True)
class StoredRecord:
    """A usage event plus its immutable upload datestamp and provenance."""

    event: UsageEvent
    upload_datestamp: datetime
    provenance: str  # LOCAL or source base URL
    xml: str

    @property
    def is_local(self) -> bool:
        return self.provenance == LOCAL


@dataclass(frozen=True)
class DatestampPage:
    records: list[StoredRecord]
    next_cursor: str | None
    complete_size: int


@dataclass(frozen=True, slots=True)
class _IndexEntry:
    offset: int
    datestamp: str
    provenance: str
    content_hash: int


_DATESTAMP_SHAPE = re.compile(rb"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z\t")


def _split_frame(raw: bytes) -> tuple[str, str, str] | None:
    """Decode one log line to (datestamp, provenance, xml); None if torn."""
    if not raw.endswith(b"\n") or not _DATESTAMP_SHAPE.match(raw):
        return None
    parts = raw[:-1].decode("utf-8").split("\t", 2)
    if len(parts) != 3 or not parts[2].endswith("</ctx:context-object>"):
        return None
    return parts[0], parts[1], parts[2]


class EventStore:
    """Append-only usage-event store backed by a single log file."""

    def __init__(self, path: str | Path, fsync: bool = False, autoflush: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.autoflush = autoflush
        self._by_uuid: dict[str, _IndexEntry] = {}
        # Sorted (datestamp, uuid) pairs; datestamp text sorts like the instant.
        self._by_datestamp: list[tuple[str, str]] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._recover()
        # Binary handles: offsets are byte positions, exact under seek/tell.
        self._appender = open(self.path, "ab")
        self._reader = open(self.path, "rb")

    def _recover(self) -> None:
        if not self.path.exists():
            return
        offset = 0
        interned: dict[str, str] = {}
        with open(self.path, "rb") as fh:
            for raw in fh:
                frame = _split_frame(raw)
                if frame is None:
                    break  # torn final write
                datestamp, provenance, xml = frame
                try:
                    event_id = _uuid_of(xml)
                except ValueError:
                    break
                provenance = interned.setdefault(provenance, provenance)
                self._index(event_id, datestamp, provenance, hash(xml), offset)
                offset += len(raw)
        # Drop torn trailing bytes so later appends stay recoverable.
        if self.path.stat().st_size > offset:
            os.truncate(self.path, offset)

    def _index(self, event_id: str, datestamp: str, provenance: str, content_hash: int, offset: int) -> None:
        self._by_uuid[event_id] = _IndexEntry(offset, datestamp, provenance, content_hash)
        insort(self._by_datestamp, (datestamp, event_id))

    def close(self) -> None:
        self._appender.flush()
        self._appender.close()
        self._reader.close()

    def __len__(self) -> int:
        return len(self._by_uuid)

    def count(self, provenance: str | None = None) -> int:
        if provenance is None:
            return len(self._by_uuid)
        return sum(1 for e in self._by_uuid.values() if self._matches(e, provenance))

    def sources(self) -> set[str]:
        return {e.provenance for e in self._by_uuid.values() if e.provenance != LOCAL}

    # -- writes ------------------------------------------------------------

    def append(
        self,
        event: UsageEvent,
        provenance: str = LOCAL,
        clock: Callable[[], datetime] = utc_now,
    ) -> StoredRecord:
        """Persist an event with upload datestamp = clock now.

        Re-appending a byte-identical event is a no-op returning the
        original record; a UUID collision with different content raises
        DuplicateEventId.
        """
        xml = serialize_context_object(event)
        existing = self._by_uuid.get(event.event_id)
        if existing is not None:
            record = self._read_at(existing, event.event_id)
            if record.xml != xml:
                raise DuplicateEventId(
                    f"{event.event_id} already stored with different content"
                )
            return record
        if re.search(r"\s", provenance):
            raise ValueError(f"provenance must not contain whitespace: {provenance!r}")
        datestamp = format_timestamp(clock())
        line = f"{datestamp}\t{provenance}\t{xml}\n".encode("utf-8")
        try:
            self._appender.seek(0, os.SEEK_END)
            offset = self._appender.tell()
            self._appender.write(line)
            if self.autoflush:
                self._appender.flush()
                if self.fsync:
                    os.fsync(self._appender.fileno())
            else:
                self._dirty = True
        except OSError as exc:
            raise StorageFailure(f"append to {self.path} failed: {exc}") from exc
        self._index(event.event_id, datestamp, provenance, hash(xml), offset)
        return StoredRecord(event, parse_timestamp(datestamp), provenance, xml)

    # -- reads -------------------------------------------------------------

    _dirty = False

    def _sync_reads(self) -> None:
        if self._dirty:
            self._appender.flush()
            self._dirty = False

    def _read_at(self, entry: _IndexEntry, event_id: str) -> StoredRecord:
        self._sync_reads()
        self._reader.seek(entry.offset)
        datestamp, provenance, xml = _split_frame(self._reader.readline())
        return StoredRecord(
            event=parse_context_object(xml),
            upload_datestamp=parse_timestamp(datestamp),
            provenance=provenance,
            xml=xml,
        )

    def get_by_uuid(self, event_id: str) -> StoredRecord | None:
        entry = self._by_uuid.get(event_id)
        if entry is None:
            return None
        return self._read_at(entry, event_id)

    def contains(self, event_id: str) -> bool:
        return event_id in self._by_uuid

    def min_datestamp(self) -> datetime | None:
        if not self._by_datestamp:
            return None
        return parse_timestamp(self._by_datestamp[0][0])

    def max_datestamp(self) -> datetime | None:
        if not self._by_datestamp:
            return None
        return parse_timestamp(self._by_datestamp[-1][0])

    def _matches(self, entry: _IndexEntry, provenance_filter: str | None) -> bool:
        if provenance_filter is None:
            return True
        if provenance_filter == LOCAL:
            return entry.provenance == LOCAL
        if provenance_filter == "harvested":
            return entry.provenance != LOCAL
        return entry.provenance == provenance_filter

    def range_by_datestamp(
        self,
        from_: datetime | None = None,
        until: datetime | None = None,
        provenance_filter: str | None = None,
        cursor: str | None = None,
        limit: int = 500,
    ) -> DatestampPage:
        """Records with from_ <= upload_datestamp <= until, paged stably.

        The cursor pins a position in the (datestamp, UUID) order, so
        appends with later datestamps never appear in earlier pages.
        `provenance_filter` is None (all), "local", "harvested", or a
        source base URL.
        """
        if from_ is not None and until is not None and from_ > until:
            raise ValueError("from_ must be <= until")
        if limit < 1:
            raise ValueError("limit must be >= 1")
        lo = 0
        hi = len(self._by_datestamp)
        if from_ is not None:
            lo = bisect_left(self._by_datestamp, (format_timestamp(from_), ""))
        if until is not None:
            hi = bisect_right(self._by_datestamp, (format_timestamp(until), "\x7f"))
        matching = [
            (ds, uid)
            for ds, uid in self._by_datestamp[lo:hi]
            if self._matches(self._by_uuid[uid], provenance_filter)
        ]
        complete_size = len(matching)
        start = 0
        if cursor is not None:
            start = bisect_right(matching, _decode_cursor(cursor))
        page = matching[start : start + limit]
        records = [self._read_at(self._by_uuid[uid], uid) for _, uid in page]
        next_cursor = None
        if start + limit < len(matching):
            next_cursor = _encode_cursor(page[-1])
        return DatestampPage(records, next_cursor, complete_size)

    def scan(self, provenance_filter: str | None = None) -> Iterator[StoredRecord]:
        """All records in (datestamp, UUID) order."""
        for ds, provenance, xml in self.scan_frames(provenance_filter):
            yield StoredRecord(
                event=parse_context_object(xml),
                upload_datestamp=parse_timestamp(ds),
                provenance=provenance,
                xml=xml,
            )

    def scan_frames(self, provenance_filter: str | None = None) -> Iterator[tuple[str, str, str]]:
        """(datestamp, provenance, canonical XML) triples in (datestamp,
        UUID) order, without parsing the payload."""
        self._sync_reads()
        order = list(self._by_datestamp)
        offsets = [self._by_uuid[uid].offset for _, uid in order]
        sequential = all(a < b for a, b in zip(offsets, offsets[1:]))
        if sequential:
            # index order equals file order: stream with readahead
            with open(self.path, "rb") as fh:
                for _, uid in order:
                    raw = fh.readline()
                    if not self._matches(self._by_uuid[uid], provenance_filter):
                        continue
                    yield _split_frame(raw)
            return
        for _, uid in order:
            entry = self._by_uuid[uid]
            if not self._matches(entry, provenance_filter):
                continue
            self._reader.seek(entry.offset)
            yield _split_frame(self._reader.readline())

    def export(self, out, provenance_filter: str | None = None) -> int:
        """Write canonical ContextObject XML, one document per line."""
        n = 0
        for record in self.scan(provenance_filter):
            out.write(record.xml + "\n")
            n += 1
        return n


def _uuid_of(xml: str) -> str:
    # Frames are written by us, so a cheap scan beats a full parse on recovery.
    marker = ' identifier="'
    i = xml.index(marker) + len(marker)
    return xml[i : xml.index('"', i)]


def _encode_cursor(position: tuple[str, str]) -> str:
    return position[0] + "|" + position[1]


def _decode_cursor(cursor: str) -> tuple[str, str]:
    parts = cursor.split("|")
    if len(parts) != 2:
        raise BadCursor(f"malformed cursor: {cursor!r}")
    try:
        parse_timestamp(parts[0])
    except ValueError as exc:
        raise BadCursor(f"malformed cursor: {cursor!r}") from exc
    return (parts[0], parts[1])
