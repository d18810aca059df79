"""Command-line interface.

Verbs: synth, ingest, export, serve-oai, harvest, pipeline, dedup, agents,
pseudonymize, rank, map, recommend, stats, serve-api. Structured logs go
to standard error; data goes to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from datetime import timedelta
from pathlib import Path

from .dedup import (
    analyze_requesters,
    cluster_referents,
    pseudonymize,
    requester_weights,
)
from .ingest import ingest_file, split_log_line, format_log_line, RawLogLine
from .model import ReferentMetadata
from .oai_harvester import HarvestSource, harvest_source, parse_source_list
from .oai_provider import OaiProvider, RepositoryConfig
from .oai_http import serve_oai
from .pipeline import Artifacts, PipelineConfig, load_config_file, run_pipeline
from .recommend import AmbiguousQuery, ClusterIndex, NotFound, NotInGraph, Query, recommend, resolve_query
from .store import LOCAL, EventStore
from .synth import SynthConfig, generate_synthetic, write_ground_truth
from .model import parse_timestamp

log = logging.getLogger("resolverlogs")


def _split_bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _pipeline_config(args) -> PipelineConfig:
    overrides = {}
    for key in (
        "store_path",
        "artifacts_dir",
        "session_gap_minutes",
        "levenshtein_threshold",
        "weight_mode",
        "graph_mode",
        "damping",
        "tol",
        "max_iter",
        "pca_top_n",
        "if_file",
        "api_bind",
        "secret_key_path",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return load_config_file(args.config or "resolverlogs.conf", overrides)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--store-path", dest="store_path")
    parser.add_argument("--artifacts-dir", dest="artifacts_dir")
    parser.add_argument("--session-gap-minutes", dest="session_gap_minutes", type=float)
    parser.add_argument("--levenshtein-threshold", dest="levenshtein_threshold", type=int)
    parser.add_argument("--weight-mode", dest="weight_mode", choices=["filter", "invfreq"])
    parser.add_argument("--graph-mode", dest="graph_mode", choices=["transition", "coaccess"])
    parser.add_argument("--damping", type=float)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--pca-top-n", dest="pca_top_n", type=int)
    parser.add_argument("--if-file", dest="if_file")
    parser.add_argument("--api-bind", dest="api_bind")
    parser.add_argument("--secret-key-path", dest="secret_key_path")


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_requesters=args.requesters,
        n_referents=args.referents,
        n_journals=args.journals,
        n_events=args.events,
        referent_zipf_s=args.referent_zipf,
        requester_zipf_s=args.requester_zipf,
        duplicate_variant_rate=args.variant_rate,
        n_heavy_hitters=args.heavy_hitters,
        heavy_hitter_multiplier=args.heavy_hitter_multiplier,
        session_gap_minutes=args.session_gap,
        seed=args.seed,
    )
    stream, truth = generate_synthetic(cfg)
    store = EventStore(args.store, autoflush=False) if args.store else None
    raw_out = open(args.raw_out, "w", encoding="utf-8") if args.raw_out else None
    from .ingest import log_line_from_event

    n = 0
    lag = timedelta(days=1)
    for event in stream:
        if store is not None:
            ts = event.event_timestamp + lag
            store.append(event, clock=lambda: ts)
        if raw_out is not None:
            raw_out.write(log_line_from_event(event) + "\n")
        n += 1
    if raw_out is not None:
        raw_out.close()
    if store is not None:
        store.close()
    if args.truth_dir:
        write_ground_truth(truth, args.truth_dir)
    if args.if_out:
        rng = random.Random(cfg.seed ^ 0xBEEF)
        issns = sorted(set(truth.cluster_journal.values()))
        with open(args.if_out, "w", encoding="utf-8") as fh:
            for issn in issns:
                fh.write(f"{issn}\t{rng.uniform(0.05, 35.0):.3f}\n")
    log.info("synth: emitted %d events (%d instances, %d heavy hitters)", n, len(truth.true_clusters), len(truth.true_heavy_hitters))
    print(f"events\t{n}")
    print(f"instances\t{len(truth.true_clusters)}")
    return 0


def cmd_ingest(args) -> int:
    store = EventStore(args.store)
    try:
        report = ingest_file(args.file, store, default_resolver=args.resolver or "")
    finally:
        store.close()
    log.info("ingest: accepted %d, rejected %d", report.accepted, report.rejected)
    print(f"accepted\t{report.accepted}")
    print(f"rejected\t{report.rejected}")
    if report.rejected:
        print(f"rejects\t{report.reject_path}")
    return 0


def cmd_export(args) -> int:
    store = EventStore(args.store)
    provenance = None if args.provenance == "all" else args.provenance
    try:
        out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
        n = store.export(out, provenance)
        if args.output:
            out.close()
    finally:
        store.close()
    log.info("export: wrote %d records", n)
    return 0


def cmd_serve_oai(args) -> int:
    store = EventStore(args.store)
    config = RepositoryConfig(
        repository_name=args.name,
        base_url=args.base_url,
        admin_email=args.email,
        granularity=args.granularity,
        page_size=args.page_size,
        expose_harvested=args.expose_harvested,
        token_secret=_read_secret(args.secret_key_path),
    )
    host, port = _split_bind(args.bind)
    try:
        serve_oai(OaiProvider(store, config), host, port)
    finally:
        store.close()
    return 0


def _read_secret(path: str | None) -> bytes:
    if not path:
        return b""
    p = Path(path)
    if not p.exists():
        import secrets

        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(secrets.token_bytes(32))
    return p.read_bytes()


def _load_harvest_state(path: Path) -> dict[str, str]:
    if path.exists():
        return json.loads(path.read_text())
    return {}


def cmd_harvest(args) -> int:
    if not args.source and not args.sources:
        log.error("harvest: need --source URL or --sources FILE")
        return 2
    sources = [HarvestSource(base_url=args.source)] if args.source else parse_source_list(args.sources)
    state_path = Path(args.state) if args.state else Path(args.store).parent / "harvest_state.json"
    state = _load_harvest_state(state_path)
    store = EventStore(args.store)
    status = 0
    try:
        for source in sources:
            if not args.full and source.base_url in state:
                source.last_watermark = parse_timestamp(state[source.base_url])
            try:
                report = harvest_source(
                    source,
                    store,
                    reject_path=Path(args.store).parent / "harvest.rejects",
                )
            except Exception as exc:
                log.error("harvest %s failed: %s", source.base_url, exc)
                status = 1
                continue
            if source.last_watermark is not None:
                from .model import format_timestamp

                state[source.base_url] = format_timestamp(source.last_watermark)
            print(
                f"{source.base_url}\tfetched={report.fetched}\tnew={report.new}"
                f"\tduplicates={report.duplicates}\terrors={len(report.errors)}"
            )
        state_path.parent.mkdir(parents=True, exist_ok=True)
        state_path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    finally:
        store.close()
    return status


def cmd_pipeline(args) -> int:
    config = _pipeline_config(args)
    report = run_pipeline(config)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_dedup(args) -> int:
    store = EventStore(args.store)
    try:
        assignment = cluster_referents(store.scan())
    finally:
        store.close()
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    for instance in sorted(assignment.instance_to_cluster):
        out.write(f"{instance}\t{assignment.instance_to_cluster[instance]}\n")
    if args.output:
        out.close()
    log.info("dedup: %d instances in %d clusters", len(assignment.instance_to_cluster), assignment.n_clusters)
    return 0


def cmd_agents(args) -> int:
    store = EventStore(args.store)
    try:
        stats = analyze_requesters(store.scan())
    finally:
        store.close()
    weights = requester_weights(stats, args.mode)
    flagged = stats.flagged
    print("rank\trequester\tcount\tflagged\tweight")
    for rank, (requester, count) in enumerate(stats.ranked, start=1):
        print(f"{rank}\t{requester}\t{count}\t{1 if requester in flagged else 0}\t{weights[requester]:.6g}")
    log.info("agents: cutoff_k=%d slope=%.3f r2=%.4f", stats.cutoff_k, stats.slope, stats.r2)
    return 0


def cmd_pseudonymize(args) -> int:
    key = Path(args.key_file).read_bytes()
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    with open(args.file, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                raw = split_log_line(line)
            except Exception:
                out.write(line if line.endswith("\n") else line + "\n")
                continue
            requester = raw.requester if raw.requester.startswith("urn:") else f"urn:ip:{raw.requester}"
            masked = RawLogLine(
                timestamp=raw.timestamp,
                requester=pseudonymize(requester, key),
                service=raw.service,
                resolver=raw.resolver,
                kev_query=raw.kev_query,
            )
            out.write(format_log_line(masked) + "\n")
    if args.output:
        out.close()
    return 0


def cmd_rank(args) -> int:
    artifacts = Artifacts(args.artifacts)
    rows = artifacts.read_rankings()
    print("rank\tprw\tif03\ttitle\tflag")
    for row in rows[: args.limit]:
        flag = "*" if row["flag"] else ""
        print(f"{row['rank']}\t{row['prw']:.6f}\t{row['if03']:.6g}\t{row['title']}\t{flag}")
    return 0


def cmd_map(args) -> int:
    artifacts = Artifacts(args.artifacts)
    for node, x, y in artifacts.read_map():
        print(f"{node}\t{x:.6g}\t{y:.6g}")
    return 0


def cmd_stats(args) -> int:
    artifacts = Artifacts(args.artifacts)
    print(json.dumps(artifacts.read_report(), indent=2, sort_keys=True))
    return 0


def cmd_recommend(args) -> int:
    artifacts = Artifacts(args.artifacts)
    clusters = artifacts.read_clusters()
    index = ClusterIndex(clusters)
    directed = True
    graph = artifacts.read_article_graph(directed)
    identifier = None
    if args.doi:
        identifier = args.doi if ":" in args.doi.split("/", 1)[0] else f"info:doi/{args.doi}"
    metadata = None
    if args.title or args.issn or args.year or args.spage:
        metadata = ReferentMetadata(atitle=args.title, issn=args.issn, date=args.year, spage=args.spage)
    try:
        cluster = resolve_query(Query(identifier=identifier, metadata=metadata), index)
    except NotFound:
        print("no match", file=sys.stderr)
        return 1
    except AmbiguousQuery as exc:
        print("ambiguous query; candidates:", file=sys.stderr)
        for candidate in exc.candidates:
            print(f"  {candidate}\t{index.label(candidate)}", file=sys.stderr)
        return 1
    print(f"query\t{cluster}\t{index.label(cluster)}")
    try:
        items = recommend(cluster, graph, index, args.k)
    except NotInGraph:
        print("cluster has no usage relationships", file=sys.stderr)
        return 0
    for item in items:
        print(f"{item.rank}\t{item.cluster}\t{item.score:.6g}\t{item.label}")
    return 0


def cmd_serve_api(args) -> int:
    import uvicorn

    from .api import build_app

    config = _pipeline_config(args)
    host, port = _split_bind(args.bind or config.api_bind)
    app = build_app(config, static_dir=args.static)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resolverlogs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--store", help="append events to this store")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--events", type=int, default=10000)
    p.add_argument("--requesters", type=int, default=500)
    p.add_argument("--referents", type=int, default=2000)
    p.add_argument("--journals", type=int, default=40)
    p.add_argument("--referent-zipf", type=float, default=1.0)
    p.add_argument("--requester-zipf", type=float, default=1.2)
    p.add_argument("--variant-rate", type=float, default=0.05)
    p.add_argument("--heavy-hitters", type=int, default=0)
    p.add_argument("--heavy-hitter-multiplier", type=float, default=1.0)
    p.add_argument("--session-gap", type=float, default=30.0)
    p.add_argument("--raw-out", help="also write raw 5-field log lines here")
    p.add_argument("--truth-dir", help="write ground truth files here")
    p.add_argument("--if-out", help="write synthetic impact factors here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse a raw log file into the store")
    p.add_argument("file")
    p.add_argument("--store", required=True)
    p.add_argument("--resolver", help="default resolver URL for lines without one")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("export", help="dump canonical ContextObject XML, one per line")
    p.add_argument("--store", required=True)
    p.add_argument("--provenance", choices=["all", "local", "harvested"], default="all")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve-oai", help="expose the store as an OAI-PMH repository")
    p.add_argument("--store", required=True)
    p.add_argument("--base-url", required=True)
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--name", default="Usage log repository")
    p.add_argument("--email", default="admin@example.org")
    p.add_argument("--granularity", choices=["day", "seconds"], default="seconds")
    p.add_argument("--page-size", type=int, default=500)
    p.add_argument("--expose-harvested", action="store_true")
    p.add_argument("--secret-key-path")
    p.set_defaults(func=cmd_serve_oai)

    p = sub.add_parser("harvest", help="harvest remote OAI-PMH log repositories")
    p.add_argument("--store", required=True)
    p.add_argument("--source", help="one source base URL")
    p.add_argument("--sources", help="file with one base URL per line")
    p.add_argument("--full", action="store_true", help="ignore stored watermarks")
    p.add_argument("--state", help="watermark state file")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("pipeline", help="run the analytics pipeline over the store")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("dedup", help="cluster referents; print instance->cluster")
    p.add_argument("--store", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("agents", help="requester histogram and heavy-hitter report")
    p.add_argument("--store", required=True)
    p.add_argument("--mode", choices=["filter", "invfreq"], default="filter")
    p.set_defaults(func=cmd_agents)

    p = sub.add_parser("pseudonymize", help="replace requesters in a raw log with keyed pseudonyms")
    p.add_argument("file")
    p.add_argument("--key-file", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pseudonymize)

    p = sub.add_parser("rank", help="print the rankings table")
    p.add_argument("--artifacts", default="artifacts")
    p.add_argument("--limit", type=int, default=50)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("map", help="print interest-map coordinates")
    p.add_argument("--artifacts", default="artifacts")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("stats", help="print the pipeline report")
    p.add_argument("--artifacts", default="artifacts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("recommend", help="resolve a query and print recommendations")
    p.add_argument("--artifacts", default="artifacts")
    p.add_argument("--doi")
    p.add_argument("--title")
    p.add_argument("--issn")
    p.add_argument("--year")
    p.add_argument("--spage")
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("serve-api", help="serve the read-only analytics API")
    _add_pipeline_flags(p)
    p.add_argument("--bind")
    p.add_argument("--static", help="also serve this directory at /")
    p.set_defaults(func=cmd_serve_api)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
