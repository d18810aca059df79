from datetime import datetime, timedelta, timezone
from urllib.parse import parse_qs, urlsplit

import pytest

from resolverlogs.model import format_timestamp, parse_timestamp
from resolverlogs.oai_harvester import (
    HarvestSource,
    ProtocolError,
    TransportError,
    harvest_source,
    parse_source_list,
)
from resolverlogs.oai_provider import OaiProvider, RepositoryConfig
from resolverlogs.store import LOCAL, EventStore
from resolverlogs.synth import SynthConfig, generate_synthetic


HARVEST_NOW = datetime(2006, 2, 1, 0, 0, 0, tzinfo=timezone.utc)


class LocalClient:
    """In-process transport: routes GETs straight into a provider."""

    def __init__(self, provider):
        self.provider = provider
        self.requests = 0

    def get(self, url, params):
        self.requests += 1
        body, status = self.provider.handle_oai_request(params.get("verb"), params)
        if status != 200:
            raise TransportError(f"HTTP {status}")
        return body


class FlakyClient(LocalClient):
    def __init__(self, provider, fail_first: int):
        super().__init__(provider)
        self.failures_left = fail_first

    def get(self, url, params):
        if self.failures_left > 0:
            self.failures_left -= 1
            raise TransportError("connection refused")
        return super().get(url, params)


def fill(store, n, seed=3, start="2005-11-12T00:00:00Z"):
    stream, _ = generate_synthetic(
        SynthConfig(n_events=n, n_requesters=30, n_referents=150, n_journals=8, seed=seed)
    )
    t = parse_timestamp(start)
    for i, event in enumerate(stream):
        ds = t + timedelta(seconds=i)
        store.append(event, clock=lambda: ds)


def provider_for(store, **overrides):
    defaults = dict(base_url="http://remote.test/oai", page_size=200, token_secret=b"k")
    defaults.update(overrides)
    return OaiProvider(store, RepositoryConfig(**defaults), clock=lambda: HARVEST_NOW)


def test_empty_remote(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(
            source, local, LocalClient(provider_for(remote)), clock=lambda: HARVEST_NOW
        )
        assert report.fetched == 0 and report.new == 0
        assert source.last_watermark is None
    finally:
        remote.close()
        local.close()


def test_two_pass_idempotence(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 1234)
        client = LocalClient(provider_for(remote))
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(source, local, client, clock=lambda: HARVEST_NOW)
        assert report.fetched == 1234 and report.new == 1234 and report.duplicates == 0
        assert report.errors == []
        assert source.last_watermark == remote.max_datestamp()

        second = harvest_source(source, local, client, clock=lambda: HARVEST_NOW + timedelta(minutes=5))
        assert second.fetched == 0 and second.new == 0 and second.duplicates == 0
        assert source.last_watermark == remote.max_datestamp()
        assert len(local) == 1234
        assert local.count("harvested") == 1234
    finally:
        remote.close()
        local.close()


def test_incremental_harvest_picks_up_new_records(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 200)
        client = LocalClient(provider_for(remote))
        source = HarvestSource(base_url="http://remote.test/oai")
        harvest_source(source, local, client, clock=lambda: HARVEST_NOW)
        fill(remote, 100, seed=9, start="2006-03-01T00:00:00Z")
        report = harvest_source(
            source, local, client, clock=lambda: datetime(2006, 4, 1, tzinfo=timezone.utc)
        )
        assert report.new == 100 and report.duplicates == 0
        assert len(local) == 300
    finally:
        remote.close()
        local.close()


def test_overlapping_sources_merge_once(tmp_path):
    remote_a = EventStore(tmp_path / "a.log")
    remote_b = EventStore(tmp_path / "b.log")
    local = EventStore(tmp_path / "local.log")
    try:
        stream, _ = generate_synthetic(
            SynthConfig(n_events=300, n_requesters=30, n_referents=150, n_journals=8, seed=5)
        )
        events = list(stream)
        t = parse_timestamp("2005-11-12T00:00:00Z")
        for i, event in enumerate(events):
            ds = t + timedelta(seconds=i)
            remote_a.append(event, clock=lambda: ds)
        # remote B shares one event with A (same UUID, same content)
        shared = events[100]
        ds_b = parse_timestamp("2005-12-01T00:00:00Z")
        remote_b.append(shared, clock=lambda: ds_b)

        source_a = HarvestSource(base_url="http://a.test/oai")
        source_b = HarvestSource(base_url="http://b.test/oai")
        report_a = harvest_source(source_a, local, LocalClient(provider_for(remote_a)), clock=lambda: HARVEST_NOW)
        report_b = harvest_source(source_b, local, LocalClient(provider_for(remote_b)), clock=lambda: HARVEST_NOW)
        assert report_a.new == 300
        assert report_b.new == 0 and report_b.duplicates == 1
        assert len(local) == 300
        record = local.get_by_uuid(shared.event_id)
        assert record.provenance == "http://a.test/oai"
    finally:
        remote_a.close()
        remote_b.close()
        local.close()


def test_transport_retries_with_backoff(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 50)
        client = FlakyClient(provider_for(remote), fail_first=3)
        sleeps = []
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(
            source, local, client, clock=lambda: HARVEST_NOW, sleep=sleeps.append
        )
        assert report.new == 50
        assert len(sleeps) == 3
        assert sleeps == sorted(sleeps)  # exponential backoff grows
    finally:
        remote.close()
        local.close()


def test_transport_gives_up_after_max_attempts(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 10)
        client = FlakyClient(provider_for(remote), fail_first=99)
        source = HarvestSource(base_url="http://remote.test/oai")
        with pytest.raises(TransportError):
            harvest_source(source, local, client, clock=lambda: HARVEST_NOW, sleep=lambda s: None)
        assert client.requests == 0  # failed before any successful page
        assert source.last_watermark is None
    finally:
        remote.close()
        local.close()


class ExpiringTokenClient(LocalClient):
    """Returns a badResumptionToken error on the first continuation."""

    def __init__(self, provider):
        super().__init__(provider)
        self.poisoned = True

    def get(self, url, params):
        if "resumptionToken" in params and self.poisoned:
            self.poisoned = False
            params = dict(params, resumptionToken="junk")
        return super().get(url, params)


def test_bad_resumption_token_restarts_window_once(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 500)
        client = ExpiringTokenClient(provider_for(remote, page_size=200))
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(source, local, client, clock=lambda: HARVEST_NOW)
        assert report.new == 500
        assert report.fetched == 500  # counts reflect the successful pass
        assert len(local) == 500
    finally:
        remote.close()
        local.close()


def test_unrecoverable_protocol_error(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")

    class AlwaysBadToken(LocalClient):
        def get(self, url, params):
            if "resumptionToken" in params:
                params = dict(params, resumptionToken="junk")
            return super().get(url, params)

    try:
        fill(remote, 500)
        source = HarvestSource(base_url="http://remote.test/oai")
        with pytest.raises(ProtocolError):
            harvest_source(
                source, local, AlwaysBadToken(provider_for(remote, page_size=200)),
                clock=lambda: HARVEST_NOW,
            )
        assert source.last_watermark is None  # watermark only moves on success
    finally:
        remote.close()
        local.close()


class CorruptingClient(LocalClient):
    """Damages one record's embedded metadata so it cannot parse (the OAI
    envelope itself stays well-formed)."""

    def get(self, url, params):
        body = super().get(url, params)
        return body.replace('timestamp="2005-', 'timestamp="bad5-', 1)


def test_parse_errors_quarantined_and_harvest_continues(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        fill(remote, 100)
        reject = tmp_path / "rejects.xml"
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(
            source,
            local,
            CorruptingClient(provider_for(remote)),
            clock=lambda: HARVEST_NOW,
            reject_path=reject,
        )
        assert report.new == 99
        assert len(report.errors) == 1
        assert report.fetched == 100
        assert reject.exists() and reject.read_text().count("\n") == 1
        # the watermark still advances: the harvest pass completed
        assert source.last_watermark is not None
    finally:
        remote.close()
        local.close()


def test_crash_mid_harvest_resumes_without_loss(tmp_path):
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")

    class CrashingClient(LocalClient):
        def __init__(self, provider, crash_after_pages):
            super().__init__(provider)
            self.pages = 0
            self.crash_after = crash_after_pages

        def get(self, url, params):
            self.pages += 1
            if self.pages > self.crash_after:
                raise KeyboardInterrupt("killed mid-harvest")
            return super().get(url, params)

    try:
        fill(remote, 600)
        provider = provider_for(remote, page_size=200)
        source = HarvestSource(base_url="http://remote.test/oai")
        with pytest.raises(KeyboardInterrupt):
            harvest_source(source, local, CrashingClient(provider, 2), clock=lambda: HARVEST_NOW)
        committed = len(local)
        assert 0 < committed < 600
        assert source.last_watermark is None  # incomplete pass

        # restart: everything arrives exactly once overall
        report = harvest_source(source, local, LocalClient(provider), clock=lambda: HARVEST_NOW)
        assert len(local) == 600
        assert report.new + report.duplicates == 600
        assert report.duplicates == committed
    finally:
        remote.close()
        local.close()


def test_harvest_window_excludes_current_second(tmp_path):
    # records appended at the harvest instant are left for the next pass
    remote = EventStore(tmp_path / "remote.log")
    local = EventStore(tmp_path / "local.log")
    try:
        stream, _ = generate_synthetic(
            SynthConfig(n_events=10, n_requesters=5, n_referents=20, n_journals=2, seed=8)
        )
        events = list(stream)
        for event in events[:5]:
            remote.append(event, clock=lambda: HARVEST_NOW - timedelta(seconds=30))
        for event in events[5:]:
            remote.append(event, clock=lambda: HARVEST_NOW)  # the open second
        source = HarvestSource(base_url="http://remote.test/oai")
        report = harvest_source(source, local, LocalClient(provider_for(remote)), clock=lambda: HARVEST_NOW)
        assert report.new == 5
        later = harvest_source(
            source, local, LocalClient(provider_for(remote)),
            clock=lambda: HARVEST_NOW + timedelta(seconds=2),
        )
        assert later.new == 5
        assert len(local) == 10
    finally:
        remote.close()
        local.close()


def test_disabled_source_rejected(tmp_path):
    local = EventStore(tmp_path / "local.log")
    try:
        with pytest.raises(ValueError):
            harvest_source(HarvestSource(base_url="http://x/", enabled=False), local, LocalClient(None))
    finally:
        local.close()


def test_parse_source_list(tmp_path):
    config = tmp_path / "sources.txt"
    config.write_text(
        "# federation partners\nhttp://a.test/oai\n\nhttp://b.test/oai  # campus B\n"
    )
    sources = parse_source_list(config)
    assert [s.base_url for s in sources] == ["http://a.test/oai", "http://b.test/oai"]
    assert all(s.enabled and s.last_watermark is None for s in sources)
