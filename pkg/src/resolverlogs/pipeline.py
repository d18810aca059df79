"""Pipeline orchestration: store scan through rankings, with persisted
artifacts.

Every stage writes its output as a documented text artifact in the
artifacts directory, so each stage is independently inspectable and the
pipeline can resume from the last completed stage. Artifacts are written
in fully deterministic order; a rerun over an unchanged store and config
produces byte-identical files (timings live in a separate, unhashed
file).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from collections import Counter
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from . import analytics
from .dedup import (
    ClusterAssignment,
    analyze_requester_counts,
    cluster_instances,
    requester_weights,
    sessionize_rows,
)
from .graph import (
    COACCESS,
    TRANSITION,
    RelationGraph,
    aggregate_to_journals,
    build_relation_graph_from_rows,
    read_graph,
    write_graph,
)
from .model import EntityDescriptor, ReferentMetadata
from .store import EventStore

__all__ = [
    "PipelineConfig",
    "PipelineReport",
    "StageError",
    "run_pipeline",
    "load_config_file",
    "Artifacts",
]


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage

log = logging.getLogger(__name__)

METADATA_COLUMNS = tuple(f.name for f in dc_fields(ReferentMetadata))


@dataclass
class PipelineConfig:
    store_path: Path = Path("store/events.log")
    artifacts_dir: Path = Path("artifacts")
    session_gap_minutes: float = 30.0
    levenshtein_threshold: int = 2
    weight_mode: str = "filter"  # filter | invfreq
    graph_mode: str = TRANSITION  # transition | coaccess
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 1000
    pca_top_n: int = 500
    if_file: Path | None = None
    api_bind: str = "127.0.0.1:8000"
    secret_key_path: Path | None = None

    def __post_init__(self):
        self.store_path = Path(self.store_path)
        self.artifacts_dir = Path(self.artifacts_dir)
        if self.if_file is not None:
            self.if_file = Path(self.if_file)
        if self.secret_key_path is not None:
            self.secret_key_path = Path(self.secret_key_path)
        if self.weight_mode not in ("filter", "invfreq"):
            raise ValueError(f"weight_mode must be filter or invfreq, got {self.weight_mode!r}")
        if self.graph_mode not in (TRANSITION, COACCESS):
            raise ValueError(f"graph_mode must be transition or coaccess, got {self.graph_mode!r}")

    def digest(self) -> str:
        payload = {
            "session_gap_minutes": self.session_gap_minutes,
            "levenshtein_threshold": self.levenshtein_threshold,
            "weight_mode": self.weight_mode,
            "graph_mode": self.graph_mode,
            "damping": self.damping,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "pca_top_n": self.pca_top_n,
            "if_file": str(self.if_file) if self.if_file else None,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def load_config_file(path: str | Path, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Flat key=value config file; every key can be overridden by flag."""
    values: dict[str, str] = {}
    path = Path(path)
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    values.update(overrides or {})
    kwargs = {}
    converters = {
        "store_path": Path,
        "artifacts_dir": Path,
        "session_gap_minutes": float,
        "levenshtein_threshold": int,
        "weight_mode": str,
        "graph_mode": str,
        "damping": float,
        "tol": float,
        "max_iter": int,
        "pca_top_n": int,
        "if_file": Path,
        "api_bind": str,
        "secret_key_path": Path,
    }
    for key, raw in values.items():
        if key not in converters:
            raise ValueError(f"unknown config key: {key!r}")
        kwargs[key] = converters[key](raw)
    return PipelineConfig(**kwargs)


@dataclass
class PipelineReport:
    """Collection statistics in the shape of the aggregated-collection
    table: events, unique referents, unique requesters, genre shares."""

    events: int = 0
    unique_referents: int = 0
    unique_requesters: int = 0
    referent_type_shares: dict[str, float] = field(default_factory=dict)
    article_nodes: int = 0
    article_edges: int = 0
    journal_nodes: int = 0
    journal_edges: int = 0
    sessions: int = 0
    instances: int = 0
    flagged_requesters: int = 0
    pagerank_iterations: int = 0
    pagerank_converged: bool = True
    rankings_rows: int = 0
    skipped: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        payload = {
            "events": self.events,
            "unique_referents": self.unique_referents,
            "unique_requesters": self.unique_requesters,
            "referent_type_shares": self.referent_type_shares,
            "article_nodes": self.article_nodes,
            "article_edges": self.article_edges,
            "journal_nodes": self.journal_nodes,
            "journal_edges": self.journal_edges,
            "sessions": self.sessions,
            "instances": self.instances,
            "flagged_requesters": self.flagged_requesters,
            "pagerank_iterations": self.pagerank_iterations,
            "pagerank_converged": self.pagerank_converged,
            "rankings_rows": self.rankings_rows,
            "skipped": self.skipped,
        }
        return payload


class Artifacts:
    """Readers and writers for the pipeline's persisted text artifacts."""

    HASHED = (
        "sessions.tsv",
        "instances.tsv",
        "clusters.tsv",
        "agents.tsv",
        "weights.tsv",
        "article_graph.edges",
        "article_graph.nodes",
        "journal_graph.edges",
        "journal_graph.nodes",
        "journals.tsv",
        "pagerank.tsv",
        "map.tsv",
        "rankings.tsv",
        "report.json",
    )

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)

    def path(self, name: str) -> Path:
        return self.dir / name

    def exists(self, *names: str) -> bool:
        return all(self.path(n).exists() for n in names)

    # -- sessions ---------------------------------------------------------

    def write_sessions(self, sessions: dict[str, str]) -> None:
        with open(self.path("sessions.tsv"), "w", encoding="utf-8") as fh:
            for event_id in sorted(sessions):
                fh.write(f"{event_id}\t{sessions[event_id]}\n")

    def read_sessions(self) -> dict[str, str]:
        out = {}
        with open(self.path("sessions.tsv"), encoding="utf-8") as fh:
            for line in fh:
                event_id, session = line.rstrip("\n").split("\t")
                out[event_id] = session
        return out

    # -- clusters ---------------------------------------------------------

    def write_clusters(self, assignment: ClusterAssignment) -> None:
        with open(self.path("instances.tsv"), "w", encoding="utf-8") as fh:
            for instance in sorted(assignment.instance_to_cluster):
                fh.write(f"{instance}\t{assignment.instance_to_cluster[instance]}\n")
        with open(self.path("clusters.tsv"), "w", encoding="utf-8") as fh:
            fh.write("cluster\t" + "\t".join(METADATA_COLUMNS) + "\tidentifiers\n")
            for cluster in sorted(assignment.cluster_metadata):
                metadata = assignment.cluster_metadata[cluster]
                row = [str(cluster)]
                for column in METADATA_COLUMNS:
                    value = getattr(metadata, column) or ""
                    row.append(value.replace("\t", " ").replace("\n", " "))
                row.append(" ".join(sorted(assignment.cluster_identifiers.get(cluster, ()))))
                fh.write("\t".join(row) + "\n")

    def read_clusters(self) -> ClusterAssignment:
        instance_to_cluster = {}
        with open(self.path("instances.tsv"), encoding="utf-8") as fh:
            for line in fh:
                instance, cluster = line.rstrip("\n").split("\t")
                instance_to_cluster[instance] = int(cluster)
        cluster_metadata = {}
        cluster_identifiers = {}
        with open(self.path("clusters.tsv"), encoding="utf-8") as fh:
            header = fh.readline()
            for line in fh:
                parts = line.rstrip("\n").split("\t")
                cluster = int(parts[0])
                values = dict(zip(METADATA_COLUMNS, parts[1 : 1 + len(METADATA_COLUMNS)]))
                cluster_metadata[cluster] = ReferentMetadata(
                    **{k: (v if v else None) for k, v in values.items()}
                )
                idents = parts[1 + len(METADATA_COLUMNS)]
                cluster_identifiers[cluster] = frozenset(idents.split()) if idents else frozenset()
        return ClusterAssignment(instance_to_cluster, cluster_metadata, cluster_identifiers)

    # -- requesters ---------------------------------------------------------

    def write_agents(self, stats) -> None:
        flagged = stats.flagged
        with open(self.path("agents.tsv"), "w", encoding="utf-8") as fh:
            fh.write("rank\trequester\tcount\tflagged\n")
            for rank, (requester, count) in enumerate(stats.ranked, start=1):
                mark = 1 if requester in flagged else 0
                fh.write(f"{rank}\t{requester}\t{count}\t{mark}\n")

    def read_agents(self) -> list[tuple[int, str, int, bool]]:
        rows = []
        with open(self.path("agents.tsv"), encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                rank, requester, count, flagged = line.rstrip("\n").split("\t")
                rows.append((int(rank), requester, int(count), flagged == "1"))
        return rows

    def write_weights(self, weights: dict[str, float]) -> None:
        with open(self.path("weights.tsv"), "w", encoding="utf-8") as fh:
            for requester in sorted(weights):
                fh.write(f"{requester}\t{weights[requester]:.10g}\n")

    def read_weights(self) -> dict[str, float]:
        out = {}
        with open(self.path("weights.tsv"), encoding="utf-8") as fh:
            for line in fh:
                requester, weight = line.rstrip("\n").split("\t")
                out[requester] = float(weight)
        return out

    # -- graphs -------------------------------------------------------------

    def write_article_graph(self, graph: RelationGraph) -> None:
        write_graph(graph, self.path("article_graph.edges"), self.path("article_graph.nodes"))

    def read_article_graph(self, directed: bool) -> RelationGraph:
        return read_graph(
            self.path("article_graph.edges"), self.path("article_graph.nodes"), directed
        )

    def write_journal_graph(self, graph: RelationGraph, titles: dict[str, str]) -> None:
        write_graph(graph, self.path("journal_graph.edges"), self.path("journal_graph.nodes"))
        with open(self.path("journals.tsv"), "w", encoding="utf-8") as fh:
            for key in sorted(titles):
                fh.write(f"{key}\t{titles[key]}\n")

    def read_journal_graph(self, directed: bool) -> RelationGraph:
        return read_graph(
            self.path("journal_graph.edges"), self.path("journal_graph.nodes"), directed
        )

    def read_journal_titles(self) -> dict[str, str]:
        out = {}
        with open(self.path("journals.tsv"), encoding="utf-8") as fh:
            for line in fh:
                key, title = line.rstrip("\n").split("\t")
                out[key] = title
        return out

    # -- analytics ------------------------------------------------------------

    def write_pagerank(self, ranks) -> None:
        with open(self.path("pagerank.tsv"), "w", encoding="utf-8") as fh:
            for node, score in ranks.ranked():
                fh.write(f"{node}\t{score:.12g}\n")

    def read_pagerank(self) -> dict[str, float]:
        out = {}
        with open(self.path("pagerank.tsv"), encoding="utf-8") as fh:
            for line in fh:
                node, score = line.rstrip("\n").split("\t")
                out[node] = float(score)
        return out

    def write_map(self, pca) -> None:
        with open(self.path("map.tsv"), "w", encoding="utf-8") as fh:
            fh.write(f"# explained_variance\t{pca.explained_variance[0]:.10g}\t{pca.explained_variance[1]:.10g}\n")
            for point in sorted(pca.points, key=lambda p: p.node):
                fh.write(f"{point.node}\t{point.x:.12g}\t{point.y:.12g}\n")

    def read_map(self) -> list[tuple[str, float, float]]:
        rows = []
        with open(self.path("map.tsv"), encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    continue
                node, x, y = line.rstrip("\n").split("\t")
                rows.append((node, float(x), float(y)))
        return rows

    def write_rankings(self, rows, titles: dict[str, str]) -> None:
        with open(self.path("rankings.tsv"), "w", encoding="utf-8") as fh:
            fh.write("rank\tprw\tif03\ttitle\tflag\n")
            for row in rows:
                title = titles.get(row.node, row.node)
                flag = "*" if row.deviation_flag else ""
                fh.write(f"{row.rank}\t{row.prw:.6f}\t{row.if_value:.6g}\t{title}\t{flag}\n")

    def read_rankings(self) -> list[dict]:
        rows = []
        with open(self.path("rankings.tsv"), encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                rank, prw, if03, title, flag = line.rstrip("\n").split("\t")
                rows.append(
                    {
                        "rank": int(rank),
                        "prw": float(prw),
                        "if03": float(if03),
                        "title": title,
                        "flag": flag == "*",
                    }
                )
        return rows

    # -- report / manifest ---------------------------------------------------

    def write_report(self, report: PipelineReport) -> None:
        with open(self.path("report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(self.path("timings.json"), "w", encoding="utf-8") as fh:
            json.dump(report.timings, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def read_report(self) -> dict:
        with open(self.path("report.json"), encoding="utf-8") as fh:
            return json.load(fh)

    def hashes(self) -> dict[str, str]:
        """SHA-256 of every deterministic artifact present."""
        out = {}
        for name in self.HASHED:
            p = self.path(name)
            if p.exists():
                out[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return out


def _signature(store: EventStore, config: PipelineConfig) -> str:
    return f"{store.path.stat().st_size if store.path.exists() else 0}:{len(store)}:{config.digest()}"


def run_pipeline(config: PipelineConfig, store: EventStore | None = None) -> PipelineReport:
    """Run sessionize -> dedup -> requester analysis -> weights -> graphs ->
    pagerank -> map -> rankings, persisting every artifact.

    Stages completed in a previous run over the same store and config are
    reused from their artifacts.
    """
    import os

    config.artifacts_dir.mkdir(parents=True, exist_ok=True)
    lock_path = config.artifacts_dir / ".lock"
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"pipeline already running (lock file {lock_path} exists; remove it if stale)"
        )
    os.write(lock_fd, str(os.getpid()).encode())

    owns_store = store is None
    if store is None:
        store = EventStore(config.store_path)
    try:
        return _run(config, store)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(_CURRENT_STAGE[0], exc) from exc
    finally:
        if owns_store:
            store.close()
        os.close(lock_fd)
        os.unlink(lock_path)


_CURRENT_STAGE = ["scan"]


def _run(config: PipelineConfig, store: EventStore) -> PipelineReport:
    artifacts = Artifacts(config.artifacts_dir)
    artifacts.dir.mkdir(parents=True, exist_ok=True)
    manifest_path = artifacts.path("manifest.json")
    signature = _signature(store, config)
    manifest = {"signature": signature, "stages": {}}
    if manifest_path.exists():
        try:
            previous = json.loads(manifest_path.read_text())
            if previous.get("signature") == signature:
                manifest = previous
        except ValueError:
            pass
    done: dict = manifest.setdefault("stages", {})
    report = PipelineReport()

    def save_manifest():
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def stage(name: str, output_files: tuple[str, ...]) -> bool:
        """True when the stage must run (not resumable)."""
        _CURRENT_STAGE[0] = name
        entry = done.get(name)
        if isinstance(entry, dict) and entry.get("done") and artifacts.exists(*output_files):
            log.info("pipeline: stage %s reused from artifacts", name)
            report.skipped.extend(entry.get("notes", []))
            return False
        return True

    def finish(name: str, started: float, notes: list[str] | None = None, **meta):
        done[name] = {"done": True, "notes": notes or [], "meta": meta}
        report.skipped.extend(notes or [])
        report.timings[name] = round(time.perf_counter() - started, 3)
        save_manifest()
        log.info("pipeline: stage %s done in %.2fs", name, report.timings[name])

    def stage_meta(name: str) -> dict:
        entry = done.get(name)
        return entry.get("meta", {}) if isinstance(entry, dict) else {}

    # -- scan: compact event views + instance registry (always runs) ------
    _CURRENT_STAGE[0] = "scan"
    t0 = time.perf_counter()
    rows: list[tuple[str, int, str, str]] = []  # event_id, epoch, requester, instance
    instance_descriptors: dict[str, EntityDescriptor] = {}
    instance_order: list[str] = []
    requester_histogram: Counter = Counter()
    for event_id, epoch, requester, instance, descriptor in _scan_events(store):
        if instance not in instance_descriptors:
            instance_descriptors[instance] = descriptor()
            instance_order.append(instance)
        requester_histogram[requester] += 1
        rows.append((event_id, epoch, requester, instance))
    report.events = len(rows)
    report.instances = len(instance_descriptors)
    report.unique_requesters = len(requester_histogram)
    report.timings["scan"] = round(time.perf_counter() - t0, 3)
    log.info("pipeline: scanned %d events (%d instances) in %.2fs", report.events, report.instances, report.timings["scan"])

    empty = report.events == 0

    # -- sessions ----------------------------------------------------------
    if stage("sessions", ("sessions.tsv",)):
        t0 = time.perf_counter()
        sessions = sessionize_rows(((e, ts, r) for e, ts, r, _ in rows), config.session_gap_minutes)
        artifacts.write_sessions(sessions)
        finish("sessions", t0)
    else:
        sessions = artifacts.read_sessions()
    report.sessions = len(set(sessions.values()))

    # -- dedup ---------------------------------------------------------------
    if stage("dedup", ("instances.tsv", "clusters.tsv")):
        t0 = time.perf_counter()
        assignment = cluster_instances(
            instance_descriptors, instance_order, config.levenshtein_threshold
        )
        artifacts.write_clusters(assignment)
        finish("dedup", t0)
    else:
        assignment = artifacts.read_clusters()
    del instance_descriptors, instance_order
    report.unique_referents = assignment.n_clusters
    genre_counts = Counter(
        (metadata.genre or "unknown") for metadata in assignment.cluster_metadata.values()
    )
    total_clusters = max(assignment.n_clusters, 1)
    report.referent_type_shares = {
        genre: round(count / total_clusters, 6) for genre, count in sorted(genre_counts.items())
    }

    # -- requester analysis ---------------------------------------------------
    if stage("agents", ("agents.tsv",)):
        t0 = time.perf_counter()
        notes = []
        if empty or len(requester_histogram) < 10:
            stats = None
            artifacts.path("agents.tsv").write_text("rank\trequester\tcount\tflagged\n")
            if not empty:
                notes.append("agents: fewer than 10 distinct requesters")
        else:
            stats = analyze_requester_counts(requester_histogram)
            artifacts.write_agents(stats)
        finish("agents", t0, notes)
    else:
        stats = None
    agent_rows = artifacts.read_agents()
    report.flagged_requesters = sum(1 for _, _, _, flagged in agent_rows if flagged)

    # -- weights ---------------------------------------------------------------
    if stage("weights", ("weights.tsv",)):
        t0 = time.perf_counter()
        if stats is None and not empty and len(requester_histogram) >= 10:
            stats = analyze_requester_counts(requester_histogram)
        if stats is None:
            weights = {r: 1.0 for r in requester_histogram}
        else:
            weights = requester_weights(stats, config.weight_mode)
        artifacts.write_weights(weights)
        finish("weights", t0)
    else:
        weights = artifacts.read_weights()

    # -- article graph ----------------------------------------------------------
    directed = config.graph_mode == TRANSITION
    if stage("article_graph", ("article_graph.edges", "article_graph.nodes")):
        t0 = time.perf_counter()
        article_graph = build_relation_graph_from_rows(
            rows, assignment.instance_to_cluster, sessions, weights, config.graph_mode
        )
        artifacts.write_article_graph(article_graph)
        finish("article_graph", t0)
    else:
        article_graph = artifacts.read_article_graph(directed)
    del rows, sessions
    report.article_nodes = article_graph.n_nodes
    report.article_edges = article_graph.n_edges

    # -- journal graph ------------------------------------------------------------
    if stage("journal_graph", ("journal_graph.edges", "journal_graph.nodes", "journals.tsv")):
        t0 = time.perf_counter()
        aggregation = aggregate_to_journals(article_graph, assignment)
        titles = _journal_titles(assignment)
        artifacts.write_journal_graph(aggregation.graph, titles)
        finish("journal_graph", t0)
        journal_graph = aggregation.graph
    else:
        journal_graph = artifacts.read_journal_graph(directed)
    report.journal_nodes = journal_graph.n_nodes
    report.journal_edges = journal_graph.n_edges

    # -- pagerank -------------------------------------------------------------------
    if stage("pagerank", ("pagerank.tsv",)):
        t0 = time.perf_counter()
        notes = []
        if journal_graph.n_nodes == 0:
            artifacts.path("pagerank.tsv").write_text("")
            if not empty:
                notes.append("pagerank: journal graph is empty")
            ranks = None
            finish("pagerank", t0, notes, iterations=0, converged=True)
        else:
            ranks = analytics.pagerank(journal_graph, config.damping, config.tol, config.max_iter)
            artifacts.write_pagerank(ranks)
            finish("pagerank", t0, notes, iterations=ranks.iterations, converged=ranks.converged)
        scores = {n: s for n, s in (ranks.scores.items() if ranks else ())}
    else:
        scores = artifacts.read_pagerank()
    report.pagerank_iterations = stage_meta("pagerank").get("iterations", 0)
    report.pagerank_converged = stage_meta("pagerank").get("converged", True)

    # -- interest map ------------------------------------------------------------------
    if stage("map", ("map.tsv",)):
        t0 = time.perf_counter()
        notes = []
        if journal_graph.n_nodes < 3:
            artifacts.path("map.tsv").write_text("")
            if not empty:
                notes.append("map: journal graph has fewer than 3 nodes")
        else:
            artifacts.write_map(analytics.pca_map(journal_graph, config.pca_top_n))
        finish("map", t0, notes)

    # -- rankings comparison --------------------------------------------------------------
    if stage("rankings", ("rankings.tsv",)):
        t0 = time.perf_counter()
        notes = []
        wrote = False
        if config.if_file is None:
            notes.append("rankings: no impact factor file configured")
        elif not scores:
            notes.append("rankings: no pagerank scores")
        else:
            impact = analytics.load_impact_factors(config.if_file)
            try:
                comparison = analytics.compare_rankings(
                    analytics.RankVector(scores, config.damping, 0, 0.0), impact
                )
            except analytics.EmptyIntersection:
                notes.append("rankings: impact factors share no journal with the graph")
            else:
                artifacts.write_rankings(comparison, artifacts.read_journal_titles())
                wrote = True
        if not wrote:
            artifacts.path("rankings.tsv").write_text("rank\tprw\tif03\ttitle\tflag\n")
        finish("rankings", t0, notes)
    report.rankings_rows = len(artifacts.read_rankings())

    _CURRENT_STAGE[0] = "report"
    artifacts.write_report(report)
    save_manifest()
    return report


# Stored documents are our own canonical serialization (single line, fixed
# prefixes and attribute order), so the scan can lift the per-event fields
# straight out of the text and fall back to a full parse only for the first
# occurrence of each referent descriptor or any non-canonical frame.
_HEAD_RE = re.compile(r'timestamp="([^"]+)" identifier="([^"]+)">')
_REFERENT_RE = re.compile(r"<ctx:referent>.*?</ctx:referent>")
_REQUESTER_RE = re.compile(r"<ctx:requester><ctx:identifier>([^<]*)</ctx:identifier>")


def _unescape(text: str) -> str:
    if "&" not in text:
        return text
    return text.replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")


def _scan_events(store: EventStore):
    """Yield (event_id, epoch, requester, instance_id, descriptor_thunk)."""
    from .contextobject import parse_context_object
    from .dedup import referent_instance_id, requester_of
    from .model import parse_timestamp

    instance_by_fragment: dict[bytes, str] = {}
    requesters: dict[str, str] = {}

    for ds, provenance, xml in store.scan_frames():
        head = _HEAD_RE.search(xml)
        referent = _REFERENT_RE.search(xml)
        if head is None or referent is None:
            event = parse_context_object(xml)
            yield (
                event.event_id,
                int(event.event_timestamp.timestamp()),
                requester_of(event),
                referent_instance_id(event.referent),
                lambda event=event: event.referent,
            )
            continue
        ts_text, event_id = head.group(1), head.group(2)
        epoch = int(parse_timestamp(ts_text).timestamp())
        requester_match = _REQUESTER_RE.search(xml)
        requester = _unescape(requester_match.group(1)) if requester_match else ""
        requester = requesters.setdefault(requester, requester)
        fragment = hashlib.sha1(referent.group(0).encode("utf-8")).digest()
        instance = instance_by_fragment.get(fragment)
        if instance is None:
            descriptor = parse_context_object(xml).referent
            instance = referent_instance_id(descriptor)
            instance_by_fragment[fragment] = instance
            yield event_id, epoch, requester, instance, (lambda d=descriptor: d)
        else:
            yield event_id, epoch, requester, instance, _no_descriptor


def _no_descriptor():
    raise AssertionError("descriptor requested for an already-registered instance")


def _journal_titles(assignment: ClusterAssignment) -> dict[str, str]:
    """Display title per journal key: the most frequent jtitle among the
    clusters that map to the key (ties to the smallest)."""
    from .graph import journal_key_of

    votes: dict[str, Counter] = {}
    for cluster, metadata in assignment.cluster_metadata.items():
        key = journal_key_of(assignment, cluster)
        if key is None:
            continue
        title = metadata.jtitle or key
        votes.setdefault(key, Counter())[title] += 1
    return {
        key: min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for key, counter in votes.items()
    }
