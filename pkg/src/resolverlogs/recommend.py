"""Usage-based recommendations.

A query (identifier and/or partial metadata) resolves to a referent
cluster; candidates are the cluster's graph neighbors scored by the sum of
both edge directions, ranked with deterministic tie-breaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import defaultdict

from .dedup import (
    LEVENSHTEIN_THRESHOLD,
    TITLE_PREFIX_LEN,
    ClusterAssignment,
    build_dedup_key,
    levenshtein,
    normalize_title,
)
from .graph import RelationGraph
from .model import ReferentMetadata

__all__ = [
    "NotFound",
    "NotInGraph",
    "AmbiguousQuery",
    "Query",
    "Recommendation",
    "ClusterIndex",
    "resolve_query",
    "recommend",
    "citation_label",
]


class NotFound(LookupError):
    """The query matches no cluster."""


class NotInGraph(LookupError):
    """The resolved cluster does not appear in the relationship graph."""


class AmbiguousQuery(LookupError):
    """Two clusters tie for the query; both candidates are attached."""

    def __init__(self, message: str, candidates: tuple[int, ...]):
        super().__init__(message)
        self.candidates = candidates


@dataclass(frozen=True)
class Query:
    """Either an identifier or partial referent metadata (or both)."""

    identifier: str | None = None
    metadata: ReferentMetadata | None = None

    def validate(self) -> None:
        if self.identifier is None and (self.metadata is None or self.metadata.is_empty()):
            raise ValueError("query needs an identifier or metadata")


@dataclass(frozen=True)
class Recommendation:
    cluster: int
    label: str
    score: float
    rank: int


def citation_label(metadata: ReferentMetadata | None, cluster: int) -> str:
    """One-line citation for display, built from canonical metadata."""
    if metadata is None:
        return f"cluster {cluster}"
    parts = []
    if metadata.atitle:
        parts.append(metadata.atitle)
    if metadata.jtitle:
        parts.append(metadata.jtitle)
    detail = ""
    if metadata.volume:
        detail = metadata.volume
        if metadata.issue:
            detail += f"({metadata.issue})"
    if metadata.spage:
        detail = f"{detail}, {metadata.spage}" if detail else metadata.spage
    if detail:
        parts.append(detail)
    if metadata.date:
        parts.append(metadata.date[:4])
    return ". ".join(parts) if parts else f"cluster {cluster}"


class ClusterIndex:
    """Lookup structures over a cluster assignment: by identifier, by
    dedup key, and by (issn, year) block for fuzzy title matching."""

    def __init__(self, clusters: ClusterAssignment):
        self.clusters = clusters
        self.by_identifier: dict[str, int] = {}
        self.by_key: dict[tuple, int] = {}
        self.blocks: dict[tuple[str, str], list[tuple[int, str]]] = defaultdict(list)
        for cluster in sorted(clusters.cluster_metadata):
            for ident in sorted(clusters.cluster_identifiers.get(cluster, ())):
                self.by_identifier.setdefault(ident, cluster)
            key = build_dedup_key(clusters.cluster_metadata.get(cluster))
            if key is not None:
                self.by_key.setdefault(
                    (key.issn, key.start_page, key.publication_year, key.title_prefix), cluster
                )
                self.blocks[(key.issn, key.publication_year)].append((cluster, key.title_prefix))

    def label(self, cluster: int) -> str:
        return citation_label(self.clusters.cluster_metadata.get(cluster), cluster)


def resolve_query(query: Query, index: ClusterIndex) -> int:
    """Resolve a query to a cluster id.

    Exact identifier match first, then exact dedup-key match, then the
    best fuzzy title match inside the (issn, year) block. Raises NotFound
    or AmbiguousQuery (candidates attached) accordingly.
    """
    query.validate()
    if query.identifier is not None:
        cluster = index.by_identifier.get(query.identifier)
        if cluster is not None:
            return cluster
    metadata = query.metadata
    if metadata is not None:
        key = build_dedup_key(metadata)
        if key is not None:
            cluster = index.by_key.get(
                (key.issn, key.start_page, key.publication_year, key.title_prefix)
            )
            if cluster is not None:
                return cluster
        if metadata.issn and metadata.date and metadata.atitle:
            issn = metadata.issn.strip().upper()
            year = metadata.date.strip()[:4]
            prefix = normalize_title(metadata.atitle)[:TITLE_PREFIX_LEN]
            best: list[int] = []
            best_distance = LEVENSHTEIN_THRESHOLD + 1
            for cluster, candidate in index.blocks.get((issn, year), ()):
                distance = levenshtein(prefix, candidate, cap=LEVENSHTEIN_THRESHOLD)
                if distance < best_distance:
                    best, best_distance = [cluster], distance
                elif distance == best_distance and distance <= LEVENSHTEIN_THRESHOLD:
                    best.append(cluster)
            if len(best) == 1:
                return best[0]
            if len(best) > 1:
                raise AmbiguousQuery(
                    f"query matches {len(best)} clusters at distance {best_distance}",
                    candidates=tuple(sorted(best)[:2]),
                )
    raise NotFound("query matches no cluster")


def recommend(
    cluster: int,
    graph: RelationGraph,
    index: ClusterIndex,
    k: int = 10,
) -> list[Recommendation]:
    """Top-k related clusters by symmetric one-hop edge weight.

    score(j) = w(q->j) + w(j->q); ties break by ascending label then
    cluster id; the query cluster itself is excluded. A cluster absent
    from the graph raises NotInGraph; a node with no positive-weight
    neighbor yields an empty list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    label = str(cluster)
    node = graph.lookup(label)
    if node is None:
        raise NotInGraph(f"cluster {cluster} has no edges in the relationship graph")
    scores: dict[int, float] = defaultdict(float)
    for (i, j), w in graph.edges.items():
        if i == node:
            scores[j] += w
        elif j == node:
            scores[i] += w
    candidates = [
        (graph.labels[n], w) for n, w in scores.items() if graph.labels[n] != label and w > 0
    ]
    candidates.sort(key=lambda item: (-item[1], index.label(int(item[0])), int(item[0])))
    return [
        Recommendation(cluster=int(lbl), label=index.label(int(lbl)), score=w, rank=rank)
        for rank, (lbl, w) in enumerate(candidates[:k], start=1)
    ]
