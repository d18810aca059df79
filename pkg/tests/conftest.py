"""Shared fixtures and hypothesis strategies."""

from __future__ import annotations

import uuid as uuidlib
from datetime import datetime, timezone

import pytest
from hypothesis import strategies as st

from resolverlogs.model import (
    KNOWN_SERVICE_FLAGS,
    EntityDescriptor,
    ReferentMetadata,
    UsageEvent,
)

# Text that survives XML element content round-trips: no control characters
# except tab/newline/carriage-return (those travel as character references),
# no surrogates.
xml_text = st.text(
    alphabet=st.characters(
        blacklist_categories=("Cs", "Cc"), whitelist_characters="\t\n\r"
    ),
    min_size=1,
    max_size=50,
)

identifier_text = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789:/._%+#?=-",
    min_size=3,
    max_size=40,
).map(lambda s: "info:x/" + s)

issn_text = st.from_regex(r"\d{4}-\d{3}[\dX]", fullmatch=True)
year_text = st.integers(min_value=1800, max_value=2100).map(str)

timestamps = st.datetimes(
    min_value=datetime(1990, 1, 1),
    max_value=datetime(2030, 12, 31, 23, 59, 59),
).map(lambda dt: dt.replace(microsecond=0, tzinfo=timezone.utc))

uuid_urns = st.uuids(version=4).map(lambda u: f"urn:UUID:{u}")

flag_tokens = st.one_of(
    st.sampled_from(KNOWN_SERVICE_FLAGS),
    st.from_regex(r"[a-z][a-z0-9-]{0,10}", fullmatch=True),
)


@st.composite
def metadata_records(draw) -> ReferentMetadata:
    return ReferentMetadata(
        genre=draw(st.none() | st.sampled_from(["article", "book", "dissertation"])),
        atitle=draw(st.none() | xml_text),
        jtitle=draw(st.none() | xml_text),
        issn=draw(st.none() | issn_text),
        volume=draw(st.none() | st.integers(1, 200).map(str)),
        issue=draw(st.none() | st.integers(1, 60).map(str)),
        spage=draw(st.none() | st.integers(1, 5000).map(str)),
        epage=draw(st.none() | st.integers(1, 5000).map(str)),
        date=draw(st.none() | year_text),
        doi=draw(st.none() | st.from_regex(r"10\.\d{4}/[a-z0-9.]{1,12}", fullmatch=True)),
    )


@st.composite
def referents(draw) -> EntityDescriptor:
    identifiers = draw(st.lists(identifier_text, max_size=3))
    metadata = draw(st.none() | metadata_records())
    if metadata is not None and metadata.is_empty():
        metadata = None
    private = draw(st.none() | xml_text)
    if not identifiers and metadata is None:
        metadata = ReferentMetadata(atitle=draw(xml_text))
    return EntityDescriptor(tuple(identifiers), metadata, private)


@st.composite
def plain_entities(draw, min_identifiers: int = 0) -> EntityDescriptor:
    identifiers = draw(st.lists(identifier_text, min_size=min_identifiers, max_size=2))
    private = draw(st.none() | xml_text)
    return EntityDescriptor(tuple(identifiers), None, private)


@st.composite
def usage_events(draw) -> UsageEvent:
    referring = draw(st.none() | plain_entities(min_identifiers=1))
    return UsageEvent(
        event_id=draw(uuid_urns),
        event_timestamp=draw(timestamps),
        referent=draw(referents()),
        requester=draw(plain_entities(min_identifiers=1)),
        service_type=frozenset(draw(st.sets(flag_tokens, min_size=1, max_size=3))),
        resolver=draw(plain_entities()),
        referrer=draw(plain_entities()),
        referring_entity=referring,
    )


@pytest.fixture
def table2_event() -> UsageEvent:
    """The published sample record: DOI referent with article metadata,
    IP requester, full-text request, resolver and referrer identifiers."""
    return UsageEvent(
        event_id="urn:UUID:58f202ac-22cf-11d1-b12d-002035b29062",
        event_timestamp=datetime(2005, 11, 11, 17, 45, 8, tzinfo=timezone.utc),
        referent=EntityDescriptor(
            identifiers=("info:doi/10.1016/j.ipm.2005.03.024",),
            metadata=ReferentMetadata(
                genre="article",
                atitle="Toward alternative metrics of journal impact",
                jtitle="Information Processing and Management",
            ),
        ),
        requester=EntityDescriptor(identifiers=("urn:ip:63.236.2.100",)),
        service_type=frozenset({"full-text"}),
        resolver=EntityDescriptor(identifiers=("http://sfx.example.org/menu",)),
        referrer=EntityDescriptor(identifiers=("info:sid/elsevier.com:scopus",)),
    )


@pytest.fixture
def tmp_store(tmp_path):
    from resolverlogs.store import EventStore

    store = EventStore(tmp_path / "events.log")
    yield store
    store.close()
