import re
from pathlib import Path

import pytest
from hypothesis import given, settings

from resolverlogs.contextobject import (
    BadTimestamp,
    MissingIdentifierAttribute,
    XmlMalformed,
    parse_context_object,
    serialize_context_object,
)
from resolverlogs.model import EntityDescriptor

from conftest import usage_events

GOLDEN = Path(__file__).parent / "data" / "context_object_table2.xml"

TIMESTAMP_ATTR = re.compile(r'timestamp="(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z)"')


def test_golden_file_byte_exact(table2_event):
    assert serialize_context_object(table2_event).encode("utf-8") == GOLDEN.read_bytes()


def test_golden_file_values(table2_event):
    text = GOLDEN.read_text()
    assert 'timestamp="2005-11-11T17:45:08Z"' in text
    assert 'identifier="urn:UUID:58f202ac-22cf-11d1-b12d-002035b29062"' in text
    assert "info:doi/10.1016/j.ipm.2005.03.024" in text
    assert "urn:ip:63.236.2.100" in text
    assert "info:sid/elsevier.com:scopus" in text
    assert "info:ofi/fmt:xml:xsd:journal" in text
    assert "info:ofi/fmt:xml:xsd:sch_svc" in text
    event = parse_context_object(text)
    assert event == table2_event


def test_minimal_event_has_only_present_entities(table2_event):
    from dataclasses import replace

    minimal = replace(
        table2_event,
        service_type=frozenset(),
        resolver=EntityDescriptor(),
        referrer=EntityDescriptor(),
        referent=EntityDescriptor(("info:doi/10.1016/j.ipm.2005.03.024",)),
    )
    xml = serialize_context_object(minimal)
    assert "<ctx:referent>" in xml and "<ctx:requester>" in xml
    assert "<ctx:resolver>" not in xml
    assert "<ctx:referrer>" not in xml
    assert "<ctx:service-type>" not in xml
    assert "<ctx:referring-entity>" not in xml
    assert parse_context_object(xml) == minimal


def test_canonical_form_is_single_line(table2_event):
    xml = serialize_context_object(table2_event)
    assert "\n" not in xml and "\r" not in xml


@settings(max_examples=300, deadline=None)
@given(usage_events())
def test_round_trip_equality(event):
    assert parse_context_object(serialize_context_object(event)) == event


@settings(max_examples=300, deadline=None)
@given(usage_events())
def test_canonical_fixpoint(event):
    once = serialize_context_object(event)
    again = serialize_context_object(parse_context_object(once))
    assert again == once


@settings(max_examples=200, deadline=None)
@given(usage_events())
def test_serialized_timestamp_format(event):
    xml = serialize_context_object(event)
    match = TIMESTAMP_ATTR.search(xml)
    assert match, xml[:200]


def test_missing_identifier_attribute():
    xml = (
        '<ctx:context-object xmlns:ctx="info:ofi/fmt:xml:xsd:ctx" '
        'timestamp="2005-11-11T17:45:08Z"><ctx:referent>'
        "<ctx:identifier>info:doi/x</ctx:identifier></ctx:referent></ctx:context-object>"
    )
    with pytest.raises(MissingIdentifierAttribute) as err:
        parse_context_object(xml)
    assert "context-object" in str(err.value)


def test_non_urn_identifier_attribute_rejected():
    xml = (
        '<ctx:context-object xmlns:ctx="info:ofi/fmt:xml:xsd:ctx" '
        'timestamp="2005-11-11T17:45:08Z" identifier="not-a-urn">'
        "<ctx:referent><ctx:identifier>info:doi/x</ctx:identifier></ctx:referent>"
        "</ctx:context-object>"
    )
    with pytest.raises(MissingIdentifierAttribute):
        parse_context_object(xml)


def test_bad_timestamp_names_location():
    xml = (
        '<ctx:context-object xmlns:ctx="info:ofi/fmt:xml:xsd:ctx" '
        'timestamp="yesterday" identifier="urn:UUID:58f202ac-22cf-11d1-b12d-002035b29062">'
        "<ctx:referent><ctx:identifier>info:doi/x</ctx:identifier></ctx:referent>"
        "</ctx:context-object>"
    )
    with pytest.raises(BadTimestamp) as err:
        parse_context_object(xml)
    assert "context-object" in str(err.value)


def test_malformed_xml():
    with pytest.raises(XmlMalformed):
        parse_context_object("<ctx:context-object")
    with pytest.raises(XmlMalformed):
        parse_context_object("<wrong/>")


def test_unknown_elements_preserved_into_private_data(table2_event):
    # a foreign element inside the referent slot must not vanish
    xml = serialize_context_object(table2_event)
    patched = xml.replace(
        "</ctx:referent>",
        "<ctx:custom-thing>hello</ctx:custom-thing></ctx:referent>",
    )
    event = parse_context_object(patched)
    assert event.referent.private_data is not None
    assert "custom-thing" in event.referent.private_data
    assert "hello" in event.referent.private_data


def test_unregistered_metadata_format_preserved(table2_event):
    xml = serialize_context_object(table2_event)
    foreign = (
        "<ctx:metadata-by-val><ctx:format>info:ofi/fmt:xml:xsd:book</ctx:format>"
        "<ctx:metadata><x>1</x></ctx:metadata></ctx:metadata-by-val>"
    )
    patched = xml.replace("</ctx:referent>", foreign + "</ctx:referent>")
    event = parse_context_object(patched)
    assert event.referent.metadata == table2_event.referent.metadata
    assert "info:ofi/fmt:xml:xsd:book" in (event.referent.private_data or "")


def test_namespace_prefixes_do_not_matter_on_parse(table2_event):
    # same document with different prefixes parses identically
    xml = serialize_context_object(table2_event)
    renamed = (
        xml.replace("<ctx:", "<co:")
        .replace("</ctx:", "</co:")
        .replace("xmlns:ctx=", "xmlns:co=")
        .replace("<jou:", "<j:")
        .replace("</jou:", "</j:")
        .replace("xmlns:jou=", "xmlns:j=")
    )
    assert parse_context_object(renamed) == table2_event
