"""Item relationship graphs mined from usage.

Transition mode relates referent clusters accessed consecutively within a
session (directed, order-sensitive, the asymmetric-matrix shape); co-access
mode relates every pair of clusters touched by the same requester
(symmetric, at most one contribution per requester and pair). Article
graphs aggregate to journal level by summing member-article edges.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .dedup import ClusterAssignment, normalize_title, referent_instance_id, requester_of

__all__ = [
    "RelationGraph",
    "JournalAggregation",
    "TRANSITION",
    "COACCESS",
    "journal_key_of",
    "build_relation_graph",
    "build_relation_graph_from_rows",
    "aggregate_to_journals",
    "write_graph",
    "read_graph",
]

TRANSITION = "transition"
COACCESS = "coaccess"


@dataclass
class RelationGraph:
    """Sparse weighted graph over dense node ids with string labels.

    Directed graphs store edges as written; undirected graphs store each
    edge under both orientations with equal weight. No self-loops.
    """

    directed: bool = True
    labels: list[str] = field(default_factory=list)
    _ids: dict[str, int] = field(default_factory=dict)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        if self.directed:
            return len(self.edges)
        return len(self.edges) // 2

    def node_id(self, label: str) -> int:
        node = self._ids.get(label)
        if node is None:
            node = len(self.labels)
            self._ids[label] = node
            self.labels.append(label)
        return node

    def lookup(self, label: str) -> int | None:
        return self._ids.get(label)

    def add_edge(self, src: str, dst: str, weight: float) -> None:
        if src == dst or weight <= 0:
            return
        i, j = self.node_id(src), self.node_id(dst)
        self.edges[(i, j)] = self.edges.get((i, j), 0.0) + weight
        if not self.directed:
            self.edges[(j, i)] = self.edges.get((j, i), 0.0) + weight

    def weight(self, src: str, dst: str) -> float:
        i, j = self._ids.get(src), self._ids.get(dst)
        if i is None or j is None:
            return 0.0
        return self.edges.get((i, j), 0.0)

    def total_weight(self) -> float:
        total = sum(self.edges.values())
        return total / 2 if not self.directed else total

    def neighbors(self, node: int) -> dict[int, float]:
        # O(E); callers needing repeated access should build an adjacency map.
        out: dict[int, float] = {}
        for (i, j), w in self.edges.items():
            if i == node:
                out[j] = out.get(j, 0.0) + w
        return out

    def incident_weight(self) -> dict[int, float]:
        totals: dict[int, float] = defaultdict(float)
        for (i, j), w in self.edges.items():
            totals[i] += w
            totals[j] += w
        return dict(totals)


def _event_of(record):
    return record.event if hasattr(record, "event") else record


def build_relation_graph(
    records,
    clusters: ClusterAssignment,
    sessions: dict[str, str],
    weights: dict[str, float] | None = None,
    mode: str = TRANSITION,
) -> RelationGraph:
    """Mine the cluster relationship graph from usage records.

    Transition: within each session's time-ordered cluster sequence, every
    consecutive pair of distinct clusters adds the requester's weight to
    the directed edge. Co-access: every unordered pair of distinct clusters
    accessed by the same requester adds min(weight, 1) to the symmetric
    edge, once per requester and pair. Node labels are cluster ids as text.
    """
    def rows():
        for record in records:
            event = _event_of(record)
            yield (
                event.event_id,
                event.event_timestamp,
                requester_of(event),
                referent_instance_id(event.referent),
            )

    return build_relation_graph_from_rows(rows(), clusters.instance_to_cluster, sessions, weights, mode)


def build_relation_graph_from_rows(
    rows,
    instance_to_cluster: dict[str, int],
    sessions: dict[str, str],
    weights: dict[str, float] | None = None,
    mode: str = TRANSITION,
) -> RelationGraph:
    """Graph construction over (event_id, timestamp, requester, instance)
    rows with a precomputed instance -> cluster map."""
    if mode not in (TRANSITION, COACCESS):
        raise ValueError(f"unknown graph mode: {mode!r}")
    weights = weights or {}
    graph = RelationGraph(directed=(mode == TRANSITION))

    if mode == TRANSITION:
        by_session: dict[str, list[tuple]] = defaultdict(list)
        for event_id, ts, requester, instance in rows:
            session = sessions.get(event_id)
            cluster = instance_to_cluster.get(instance)
            if session is None or cluster is None:
                continue
            by_session[session].append((ts, event_id, cluster, weights.get(requester, 1.0)))
        for session in sorted(by_session):
            entries = sorted(by_session[session])
            for k in range(len(entries) - 1):
                _, _, a, w = entries[k]
                _, _, b, _ = entries[k + 1]
                if a != b and w > 0:
                    graph.add_edge(str(a), str(b), w)
        return graph

    accessed: dict[str, set[int]] = defaultdict(set)
    for event_id, ts, requester, instance in rows:
        cluster = instance_to_cluster.get(instance)
        if cluster is not None:
            accessed[requester].add(cluster)
    for requester in sorted(accessed):
        w = min(weights.get(requester, 1.0), 1.0)
        if w <= 0:
            continue
        touched = sorted(accessed[requester])
        for i in range(len(touched)):
            for j in range(i + 1, len(touched)):
                graph.add_edge(str(touched[i]), str(touched[j]), w)
    return graph


def journal_key_of(clusters: ClusterAssignment, cluster: int) -> str | None:
    """Journal identity of a cluster: ISSN if present, else the normalized
    journal title; None when the cluster has neither."""
    metadata = clusters.cluster_metadata.get(cluster)
    if metadata is None:
        return None
    if metadata.issn:
        return metadata.issn.strip().upper()
    if metadata.jtitle:
        normalized = normalize_title(metadata.jtitle)
        return normalized if normalized else None
    return None


@dataclass
class JournalAggregation:
    graph: RelationGraph
    discarded_intra_journal_weight: float
    dropped_clusters: int
    dropped_edge_weight: float


def aggregate_to_journals(
    graph: RelationGraph, clusters: ClusterAssignment
) -> JournalAggregation:
    """Sum article-level edges up to journal level.

    Clusters without journal metadata are dropped (counted, with the edge
    weight they carried); intra-journal edges become self-loops and are
    discarded (their weight is reported). Node set = journals with at
    least one incident edge.
    """
    keys: dict[int, str | None] = {}
    for label in graph.labels:
        cluster = int(label)
        keys[cluster] = journal_key_of(clusters, cluster)
    dropped_clusters = sum(1 for k in keys.values() if k is None)

    out = RelationGraph(directed=graph.directed)
    discarded = 0.0
    dropped_weight = 0.0
    for (i, j), w in sorted(graph.edges.items()):
        if not graph.directed and i > j:
            continue  # visit each undirected edge once
        src = keys[int(graph.labels[i])]
        dst = keys[int(graph.labels[j])]
        if src is None or dst is None:
            dropped_weight += w
            continue
        if src == dst:
            discarded += w
            continue
        out.add_edge(src, dst, w)
    return JournalAggregation(out, discarded, dropped_clusters, dropped_weight)


def write_graph(graph: RelationGraph, edges_path: str | Path, nodes_path: str | Path) -> None:
    """Text export: edges as `src<TAB>dst<TAB>weight`, nodes as `id<TAB>label`,
    in stable sorted order for diffability."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for node, label in enumerate(graph.labels):
            fh.write(f"{node}\t{label}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for (i, j), w in sorted(graph.edges.items()):
            if not graph.directed and i > j:
                continue
            fh.write(f"{i}\t{j}\t{w:.10g}\n")


def read_graph(edges_path: str | Path, nodes_path: str | Path, directed: bool = True) -> RelationGraph:
    graph = RelationGraph(directed=directed)
    with open(nodes_path, encoding="utf-8") as fh:
        for line in fh:
            node_id, label = line.rstrip("\n").split("\t")
            assert graph.node_id(label) == int(node_id)
    with open(edges_path, encoding="utf-8") as fh:
        for line in fh:
            i, j, w = line.rstrip("\n").split("\t")
            graph.add_edge(graph.labels[int(i)], graph.labels[int(j)], float(w))
    return graph
