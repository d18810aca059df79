#!/usr/bin/env python3
"""Synth-to-rankings walkthrough: builds a corpus, runs the pipeline, and
prints the collection statistics, the top of the rankings table, and a few
recommendations for the most-connected article."""

import json
import random
import sys
import tempfile
from datetime import timedelta
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resolverlogs.pipeline import Artifacts, PipelineConfig, run_pipeline
from resolverlogs.recommend import ClusterIndex, recommend
from resolverlogs.store import EventStore
from resolverlogs.synth import SynthConfig, generate_synthetic


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="pipeline-demo-"))
    print(f"working under {workdir}")

    cfg = SynthConfig(
        n_requesters=800, n_referents=8000, n_journals=60, n_events=120_000,
        requester_zipf_s=0.8, duplicate_variant_rate=0.08,
        n_heavy_hitters=3, heavy_hitter_multiplier=40.0, seed=7,
    )
    stream, truth = generate_synthetic(cfg)
    store = EventStore(workdir / "events.log", autoflush=False)
    for event in stream:
        ds = event.event_timestamp + timedelta(days=1)
        store.append(event, clock=lambda: ds)
    store.close()

    rng = random.Random(1)
    if_file = workdir / "if.tsv"
    with open(if_file, "w", encoding="utf-8") as fh:
        for issn in sorted(set(truth.cluster_journal.values())):
            fh.write(f"{issn}\t{rng.uniform(0.1, 30.0):.3f}\n")

    config = PipelineConfig(
        store_path=workdir / "events.log",
        artifacts_dir=workdir / "artifacts",
        if_file=if_file,
    )
    report = run_pipeline(config)
    print("\ncollection statistics:")
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    print("stage timings:", report.timings)

    artifacts = Artifacts(config.artifacts_dir)
    print("\ntop of the rankings table (usage PageRank vs impact factor):")
    print("rank\tprw\tif03\tflag\ttitle")
    for row in artifacts.read_rankings()[:10]:
        print(f"{row['rank']}\t{row['prw']:.3f}\t{row['if03']:.3f}\t"
              f"{'*' if row['flag'] else ''}\t{row['title']}")

    clusters = artifacts.read_clusters()
    index = ClusterIndex(clusters)
    graph = artifacts.read_article_graph(directed=True)
    incident = graph.incident_weight()
    busiest = max(range(graph.n_nodes), key=lambda n: incident.get(n, 0.0))
    query = int(graph.labels[busiest])
    print(f"\nrecommendations for the busiest article ({index.label(query)}):")
    for item in recommend(query, graph, index, k=5):
        print(f"  {item.rank}. [{item.score:.1f}] {item.label}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
