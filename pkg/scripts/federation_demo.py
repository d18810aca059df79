#!/usr/bin/env python3
"""Three provider nodes and one aggregator on loopback.

Builds three synthetic institutional stores with a 1% cross-node overlap,
serves each over OAI-PMH, harvests all of them into an aggregator, and
shows that re-harvesting fetches nothing and that a downstream harvester
of the aggregator only receives the aggregator's own local records.
"""

import sys
import tempfile
import threading
from datetime import timedelta
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resolverlogs.model import parse_timestamp
from resolverlogs.oai_harvester import HarvestSource, HttpClient, harvest_source
from resolverlogs.oai_http import make_oai_server
from resolverlogs.oai_provider import OaiProvider, RepositoryConfig
from resolverlogs.store import LOCAL, EventStore
from resolverlogs.synth import SynthConfig, generate_synthetic


def populate(path, events, start="2005-10-01T00:00:00Z"):
    store = EventStore(path, autoflush=False)
    t = parse_timestamp(start)
    for i, event in enumerate(events):
        ds = t + timedelta(seconds=i)
        store.append(event, clock=lambda: ds)
    return store


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="federation-demo-"))
    print(f"working under {workdir}")
    sizes = (2000, 3000, 5000)
    streams = [
        list(generate_synthetic(SynthConfig(
            n_events=n, n_requesters=100, n_referents=1000, n_journals=20, seed=100 + k,
        ))[0])
        for k, n in enumerate(sizes)
    ]
    node_events = [
        streams[0],
        streams[1] + streams[0][:30],     # 1% of node B's records mirror node A
        streams[2] + streams[0][100:150],  # and 1% of node C's too
    ]

    stores, servers, sources = [], [], []
    try:
        for k, events in enumerate(node_events):
            store = populate(workdir / f"node{k}.log", events)
            provider = OaiProvider(store, RepositoryConfig(
                repository_name=f"Campus {k} usage logs",
                base_url=f"http://campus{k}.example.edu/oai",
                page_size=500,
            ))
            server = make_oai_server(provider)
            threading.Thread(target=server.serve_forever, daemon=True).start()
            port = server.server_address[1]
            print(f"node {k}: {len(store)} records on http://127.0.0.1:{port}/")
            stores.append(store)
            servers.append(server)
            sources.append(HarvestSource(base_url=f"http://127.0.0.1:{port}/"))

        aggregator = populate(workdir / "aggregator.log",
                              list(generate_synthetic(SynthConfig(
                                  n_events=500, n_requesters=40, n_referents=300,
                                  n_journals=10, seed=999))[0]),
                              start="2005-10-02T00:00:00Z")
        client = HttpClient()
        print("\nfirst harvest pass:")
        for source in sources:
            report = harvest_source(source, aggregator, client)
            print(f"  {source.base_url}: fetched={report.fetched} new={report.new} "
                  f"duplicates={report.duplicates}")
        print(f"aggregator now holds {len(aggregator)} records "
              f"({aggregator.count(LOCAL)} local, {aggregator.count('harvested')} harvested)")

        print("\nsecond harvest pass (expect zeros):")
        for source in sources:
            report = harvest_source(source, aggregator, client)
            print(f"  {source.base_url}: fetched={report.fetched} new={report.new}")

        agg_provider = OaiProvider(aggregator, RepositoryConfig(
            repository_name="Aggregator", base_url="http://agg.example.edu/oai"))
        agg_server = make_oai_server(agg_provider)
        threading.Thread(target=agg_server.serve_forever, daemon=True).start()
        servers.append(agg_server)
        downstream = EventStore(workdir / "downstream.log")
        stores.append(downstream)
        report = harvest_source(
            HarvestSource(base_url=f"http://127.0.0.1:{agg_server.server_address[1]}/"),
            downstream, client)
        print(f"\ndownstream harvest of the aggregator (no re-exposure): "
              f"new={report.new} == aggregator local {aggregator.count(LOCAL)}")
        stores.append(aggregator)
        return 0
    finally:
        for server in servers:
            server.shutdown()
            server.server_close()
        for store in stores:
            store.close()


if __name__ == "__main__":
    sys.exit(main())
