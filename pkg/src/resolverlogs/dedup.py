"""Referent deduplication and requester analysis.

Referent instances (distinct referent descriptors) are clustered in two
passes: shared identifiers first, then a fuzzy title match inside blocks of
equal (issn, start page, publication year). Requester analysis finds the
proxy/robot head of the rank-frequency curve by discarding top ranks until
the remainder fits a power law, and derives per-requester weights.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import re
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, fields

import numpy as np

from .model import EntityDescriptor, ReferentMetadata, UsageEvent

__all__ = [
    "TooFewRequesters",
    "EmptyKey",
    "DedupKey",
    "ClusterAssignment",
    "RequesterStats",
    "normalize_title",
    "build_dedup_key",
    "levenshtein",
    "referent_instance_id",
    "cluster_referents",
    "cluster_instances",
    "analyze_requesters",
    "analyze_requester_counts",
    "requester_weights",
    "pseudonymize",
    "sessionize",
    "sessionize_rows",
    "requester_of",
]

TITLE_PREFIX_LEN = 25
LEVENSHTEIN_THRESHOLD = 2
FIT_R2_TARGET = 0.98
CUTOFF_K_MAX = 100

_METADATA_FIELDS = tuple(f.name for f in fields(ReferentMetadata))
_PUNCT_RE = re.compile(r"[^\w\s]|_", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class TooFewRequesters(ValueError):
    """Requester analysis needs at least 10 distinct requesters."""


class EmptyKey(ValueError):
    """Pseudonymization requires a non-empty secret key."""


def normalize_title(title: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    text = _PUNCT_RE.sub(" ", title.casefold())
    return _WS_RE.sub(" ", text).strip()


def _normalize_spage(spage: str) -> str:
    stripped = spage.strip().lstrip("0")
    return stripped if stripped else "0"


@dataclass(frozen=True)
class DedupKey:
    """Metadata key for referent matching: built only when issn, start
    page and year are all present; the title prefix is fuzzy-matched."""

    issn: str
    start_page: str
    publication_year: str
    title_prefix: str

    def block(self) -> tuple[str, str, str]:
        return (self.issn, self.start_page, self.publication_year)


def build_dedup_key(metadata: ReferentMetadata | None) -> DedupKey | None:
    """Normalized dedup key, or None when issn/spage/year are not all present."""
    if metadata is None:
        return None
    if not metadata.issn or not metadata.spage or not metadata.date:
        return None
    year_match = re.match(r"^(\d{4})", metadata.date.strip())
    if year_match is None:
        return None
    prefix = normalize_title(metadata.atitle)[:TITLE_PREFIX_LEN] if metadata.atitle else ""
    return DedupKey(
        issn=metadata.issn.strip().upper(),
        start_page=_normalize_spage(metadata.spage),
        publication_year=year_match.group(1),
        title_prefix=prefix,
    )


def levenshtein(a: str, b: str, cap: int | None = None) -> int:
    """Edit distance; with `cap`, any value > cap is reported as cap + 1."""
    if a == b:
        return 0
    if len(a) > len(b):
        a, b = b, a
    if cap is not None and len(b) - len(a) > cap:
        return cap + 1
    previous = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        current = [j]
        best = j
        for i, ca in enumerate(a, start=1):
            cost = min(
                previous[i] + 1,
                current[i - 1] + 1,
                previous[i - 1] + (ca != cb),
            )
            current.append(cost)
            best = min(best, cost)
        if cap is not None and best > cap:
            return cap + 1
        previous = current
    return previous[-1]


def referent_instance_id(referent: EntityDescriptor) -> str:
    """Content fingerprint identifying one referent instance (a distinct
    descriptor); equal descriptors map to the same instance."""
    h = hashlib.sha1()
    for ident in referent.identifiers:
        h.update(b"i\x00" + ident.encode("utf-8") + b"\x00")
    if referent.metadata is not None:
        for name in _METADATA_FIELDS:
            value = getattr(referent.metadata, name)
            if value is not None:
                h.update(b"m\x00" + name.encode() + b"\x00" + value.encode("utf-8") + b"\x00")
    if referent.private_data is not None:
        h.update(b"p\x00" + referent.private_data.encode("utf-8"))
    return h.hexdigest()[:16]


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, x: str) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass
class ClusterAssignment:
    """Referent clustering result: instance -> dense cluster id, plus the
    canonical metadata (field-wise most frequent value) and the union of
    identifiers per cluster."""

    instance_to_cluster: dict[str, int]
    cluster_metadata: dict[int, ReferentMetadata]
    cluster_identifiers: dict[int, frozenset[str]]

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_metadata)

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = defaultdict(list)
        for instance, cluster in self.instance_to_cluster.items():
            out[cluster].append(instance)
        return out


def _referent_of(record) -> EntityDescriptor:
    event = record.event if hasattr(record, "event") else record
    return event.referent


def cluster_referents(records, threshold: int = LEVENSHTEIN_THRESHOLD) -> ClusterAssignment:
    """Cluster referent instances by shared identifiers, then by fuzzy
    title match within (issn, start page, year) blocks.

    Keyless instances with no shared identifier stay singletons. Cluster
    ids are dense integers in first-seen instance order.
    """
    instances: dict[str, EntityDescriptor] = {}
    order: list[str] = []
    for record in records:
        referent = _referent_of(record)
        instance = referent_instance_id(referent)
        if instance not in instances:
            instances[instance] = referent
            order.append(instance)
    return cluster_instances(instances, order, threshold)


def cluster_instances(
    instances: dict[str, EntityDescriptor],
    order: list[str] | None = None,
    threshold: int = LEVENSHTEIN_THRESHOLD,
) -> ClusterAssignment:
    """Clustering core over a prebuilt instance registry (id -> descriptor)."""
    if order is None:
        order = list(instances)
    uf = _UnionFind()
    for instance in order:
        uf.add(instance)

    # Pass 1: any shared identifier joins two instances.
    seen_identifier: dict[str, str] = {}
    for instance in order:
        for ident in instances[instance].identifiers:
            first = seen_identifier.setdefault(ident, instance)
            if first != instance:
                uf.union(first, instance)

    # Pass 2: fuzzy title prefixes within equal-key blocks. Blocks are
    # processed in sorted key order so merges are deterministic.
    blocks: dict[tuple[str, str, str], list[tuple[str, str]]] = defaultdict(list)
    for instance in order:
        key = build_dedup_key(instances[instance].metadata)
        if key is not None:
            blocks[key.block()].append((instance, key.title_prefix))
    for block_key in sorted(blocks):
        members = blocks[block_key]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if levenshtein(members[i][1], members[j][1], cap=threshold) <= threshold:
                    uf.union(members[i][0], members[j][0])

    cluster_ids: dict[str, int] = {}
    instance_to_cluster: dict[str, int] = {}
    groups: dict[int, list[str]] = defaultdict(list)
    for instance in order:
        root = uf.find(instance)
        if root not in cluster_ids:
            cluster_ids[root] = len(cluster_ids)
        cluster = cluster_ids[root]
        instance_to_cluster[instance] = cluster
        groups[cluster].append(instance)

    cluster_metadata: dict[int, ReferentMetadata] = {}
    cluster_identifiers: dict[int, frozenset[str]] = {}
    for cluster, members in groups.items():
        idents: set[str] = set()
        field_counts: dict[str, Counter] = defaultdict(Counter)
        for instance in members:
            descriptor = instances[instance]
            idents.update(descriptor.identifiers)
            if descriptor.metadata is not None:
                for name in _METADATA_FIELDS:
                    value = getattr(descriptor.metadata, name)
                    if value is not None:
                        field_counts[name][value] += 1
        canonical = {}
        for name, counts in field_counts.items():
            # most frequent value; ties break to the smallest value
            canonical[name] = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        cluster_metadata[cluster] = ReferentMetadata(**canonical)
        cluster_identifiers[cluster] = frozenset(idents)

    return ClusterAssignment(instance_to_cluster, cluster_metadata, cluster_identifiers)


def requester_of(record) -> str:
    """Requester identity of an event: its first requester identifier."""
    event = record.event if hasattr(record, "event") else record
    ids = event.requester.identifiers
    return ids[0] if ids else ""


@dataclass
class RequesterStats:
    """Requester activity histogram with a power-law head/tail split.

    `cutoff_k` is the smallest number of top ranks whose removal leaves a
    rank-frequency curve fitting a power law (R^2 >= 0.98); those top
    requesters are the flagged heavy hitters.
    """

    histogram: dict[str, int]
    ranked: list[tuple[str, int]]
    slope: float
    r2: float
    cutoff_k: int

    @property
    def flagged(self) -> set[str]:
        return {requester for requester, _ in self.ranked[: self.cutoff_k]}


def _suffix_fits(counts: np.ndarray, k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit of log(count) vs log(rank) over ranks > k, for
    every k in 0..k_max, via suffix sums. Returns (slopes, r2s)."""
    n = len(counts)
    x = np.log(np.arange(1, n + 1, dtype=np.float64))
    y = np.log(counts.astype(np.float64))
    # suffix sums: s[k] = sum over ranks k+1..n
    def suffix(v: np.ndarray) -> np.ndarray:
        return np.concatenate([np.cumsum(v[::-1])[::-1], [0.0]])

    sx, sy = suffix(x), suffix(y)
    sxx, syy, sxy = suffix(x * x), suffix(y * y), suffix(x * y)
    ks = np.arange(0, k_max + 1)
    m = (n - ks).astype(np.float64)
    cov = m * sxy[ks] - sx[ks] * sy[ks]
    var_x = m * sxx[ks] - sx[ks] ** 2
    var_y = m * syy[ks] - sy[ks] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(var_x > 0, cov / np.where(var_x > 0, var_x, 1.0), 0.0)
        r2 = np.where(
            var_y > 1e-30,
            np.where(var_x > 0, cov**2 / np.where(var_x > 0, var_x, 1.0) / np.where(var_y > 1e-30, var_y, 1.0), 0.0),
            1.0,  # constant counts: a flat line fits exactly
        )
    return slopes, r2


def analyze_requesters(records, k_max: int = CUTOFF_K_MAX) -> RequesterStats:
    """Histogram plus automatic heavy-hitter cutoff.

    Searches the smallest k <= k_max such that discarding the top-k ranks
    leaves a log-log rank/frequency fit with R^2 >= 0.98; falls back to the
    best-fitting k when none qualifies.
    """
    return analyze_requester_counts(Counter(requester_of(r) for r in records), k_max)


def analyze_requester_counts(histogram: dict[str, int], k_max: int = CUTOFF_K_MAX) -> RequesterStats:
    """analyze_requesters over a precomputed requester histogram."""
    if len(histogram) < 10:
        raise TooFewRequesters(f"{len(histogram)} distinct requesters, need >= 10")
    ranked = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    counts = np.array([c for _, c in ranked], dtype=np.int64)
    k_max = min(k_max, len(counts) - 2)
    slopes, r2s = _suffix_fits(counts, k_max)
    qualifying = np.nonzero(r2s >= FIT_R2_TARGET)[0]
    k = int(qualifying[0]) if len(qualifying) else int(np.argmax(r2s))
    return RequesterStats(
        histogram=dict(histogram),
        ranked=ranked,
        slope=float(slopes[k]),
        r2=float(r2s[k]),
        cutoff_k=k,
    )


def requester_weights(stats: RequesterStats, mode: str = "filter") -> dict[str, float]:
    """Per-requester weights in [0, 1].

    "filter": flagged heavy hitters get 0, everyone else 1.
    "invfreq": median_count / count, capped at 1.
    """
    if mode == "filter":
        flagged = stats.flagged
        return {r: (0.0 if r in flagged else 1.0) for r in stats.histogram}
    if mode == "invfreq":
        median = statistics.median(stats.histogram.values())
        return {r: min(1.0, median / c) for r, c in stats.histogram.items()}
    raise ValueError(f"unknown weight mode: {mode!r}")


def pseudonymize(requester_id: str, secret_key: bytes | str) -> str:
    """Keyed one-way mapping of a requester id to a session-token URN."""
    if not secret_key:
        raise EmptyKey("secret key must be non-empty")
    if isinstance(secret_key, str):
        secret_key = secret_key.encode("utf-8")
    digest = hmac.new(secret_key, requester_id.encode("utf-8"), hashlib.sha256)
    return f"urn:x-session:{digest.hexdigest()[:28]}"


def sessionize(records, gap_minutes: float = 30.0) -> dict[str, str]:
    """Split each requester's time-ordered events into sessions.

    A new session starts when the gap to the previous event reaches
    gap_minutes. Returns event_id -> session id (ids unique per run).
    """

    def rows():
        for record in records:
            event = record.event if hasattr(record, "event") else record
            yield event.event_id, event.event_timestamp, requester_of(event)

    return sessionize_rows(rows(), gap_minutes)


def sessionize_rows(rows, gap_minutes: float = 30.0) -> dict[str, str]:
    """sessionize over (event_id, timestamp, requester) rows; timestamps
    may be datetimes or epoch seconds."""
    per_requester: dict[str, list[tuple]] = defaultdict(list)
    for event_id, ts, requester in rows:
        per_requester[requester].append((ts, event_id))
    gap = gap_minutes * 60.0
    sessions: dict[str, str] = {}
    for requester in sorted(per_requester):
        events = sorted(per_requester[requester])
        counter = 0
        session_id = f"{requester}#0"
        previous = None
        for ts, event_id in events:
            if previous is not None:
                delta = (ts - previous) if isinstance(ts, (int, float)) else (ts - previous).total_seconds()
                if delta >= gap:
                    counter += 1
                    session_id = f"{requester}#{counter}"
            sessions[event_id] = session_id
            previous = ts
    return sessions
