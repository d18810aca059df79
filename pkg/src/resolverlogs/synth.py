"""Seeded synthetic usage corpora with ground truth.

Stands in for real linking-server logs: referent popularity and requester
activity follow configurable Zipf laws, a configurable share of emissions
are metadata variants that must survive deduplication, designated heavy
hitters distort the head of the requester curve, and sessions draw
referents correlated by journal so the co-access structure is minable.
Everything is deterministic given the seed.
"""

from __future__ import annotations

import random
import uuid as uuidlib
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import accumulate
from pathlib import Path
from typing import Iterator

from .dedup import referent_instance_id
from .model import EntityDescriptor, ReferentMetadata, UsageEvent

__all__ = ["InvalidConfig", "SynthConfig", "GroundTruth", "generate_synthetic", "write_ground_truth"]

SPAN_START = int(datetime(2004, 1, 1, tzinfo=timezone.utc).timestamp())
SPAN_SECONDS = 500 * 86400

RESOLVER_ID = "http://sfx.example.edu/menu"
REFERRER_SIDS = (
    "google:scholar",
    "elsevier.com:scopus",
    "isi:wos",
    "ebsco.com:asp",
    "proquest.com:pqd",
)
GENRES = ("article", "book", "dissertation", "report")
GENRE_CUTS = (0.67, 0.85, 0.95, 1.0)

_WORDS = (
    "adaptive analysis applied behavior census climate clinical cognitive "
    "communal comparative computational cultural decision demographic digital "
    "dynamic ecological economic empirical evolution experimental fiscal "
    "genetic geographic historical hybrid immune industrial integrated "
    "kinetic lexical linear marine maternal measurement metabolic migration "
    "modeling molecular monetary neural nutrient observational optical "
    "organizational particle perception policy predictive quantum regional "
    "resilience rhetorical seismic semantic sensory social spatial spectral "
    "statistical stochastic structural symbolic synthetic temporal thermal "
    "topological urban variational visual welfare"
).split()


class InvalidConfig(ValueError):
    """A SynthConfig field is out of range."""


@dataclass(frozen=True)
class SynthConfig:
    n_requesters: int = 500
    n_referents: int = 2000
    n_journals: int = 40
    n_events: int = 10000
    referent_zipf_s: float = 1.0
    requester_zipf_s: float = 1.2
    duplicate_variant_rate: float = 0.05
    n_heavy_hitters: int = 0
    heavy_hitter_multiplier: float = 1.0
    session_gap_minutes: float = 30.0
    seed: int = 42

    def validate(self) -> None:
        if self.n_journals > self.n_referents:
            raise InvalidConfig("n_journals must be <= n_referents")
        if min(self.n_requesters, self.n_referents, self.n_journals) < 1 or self.n_events < 0:
            raise InvalidConfig("population sizes must be positive")
        if self.referent_zipf_s <= 0 or self.requester_zipf_s <= 0:
            raise InvalidConfig("zipf exponents must be > 0")
        if not 0.0 <= self.duplicate_variant_rate <= 1.0:
            raise InvalidConfig("duplicate_variant_rate must be in [0, 1]")
        if self.n_heavy_hitters < 0 or self.n_heavy_hitters > self.n_requesters:
            raise InvalidConfig("n_heavy_hitters must be in [0, n_requesters]")
        if self.heavy_hitter_multiplier < 1.0:
            raise InvalidConfig("heavy_hitter_multiplier must be >= 1")
        if self.session_gap_minutes < 1.0:
            raise InvalidConfig("session_gap_minutes must be >= 1")


@dataclass
class GroundTruth:
    """What the generator knows: instance -> true cluster, the planted
    heavy hitters, and event -> true session. The event-keyed maps are
    complete once the event stream has been exhausted."""

    true_clusters: dict[str, int] = field(default_factory=dict)
    true_heavy_hitters: set[str] = field(default_factory=set)
    true_sessions: dict[str, str] = field(default_factory=dict)
    event_to_instance: dict[str, str] = field(default_factory=dict)
    cluster_journal: dict[int, str] = field(default_factory=dict)
    requester_counts: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class _Referent:
    index: int
    genre: str
    atitle: str
    year: int
    doi: str
    journal_issn: str | None = None
    jtitle: str | None = None
    volume: str | None = None
    issue: str | None = None
    spage: str | None = None
    epage: str | None = None


def _zipf_quota(n_items: int, s: float, total: int, inflate: dict[int, float]) -> list[int]:
    """Largest-remainder apportionment of `total` events over Zipf ranks,
    with per-rank weight inflation for planted heavy hitters."""
    weights = [(rank + 1) ** -s for rank in range(n_items)]
    for rank, factor in inflate.items():
        weights[rank] *= factor
    scale = total / sum(weights)
    raw = [w * scale for w in weights]
    counts = [int(x) for x in raw]
    remainder = total - sum(counts)
    by_fraction = sorted(range(n_items), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in by_fraction[:remainder]:
        counts[i] += 1
    return counts


def _typo(title: str) -> str:
    # Deterministic single-letter substitution inside the first 25 chars.
    limit = min(25, len(title))
    for i in range(2, limit):
        ch = title[i]
        if ch.isalpha():
            replacement = "z" if ch.lower() != "z" else "q"
            return title[:i] + replacement + title[i + 1 :]
    return title + "z"


class _Sampler:
    """Weighted choice over a fixed population via bisect on cumulative weights."""

    def __init__(self, weights: list[float]):
        self.cum = list(accumulate(weights))
        self.total = self.cum[-1] if self.cum else 0.0

    def draw(self, rng: random.Random) -> int:
        return bisect_right(self.cum, rng.random() * self.total)


def _build_referents(cfg: SynthConfig, rng: random.Random) -> tuple[list[_Referent], list[str]]:
    issns: list[str] = []
    seen_issn: set[str] = set()
    while len(issns) < cfg.n_journals:
        issn = f"{rng.randint(0, 9999):04d}-{rng.randint(0, 999):03d}{rng.choice('0123456789X')}"
        if issn not in seen_issn:
            seen_issn.add(issn)
            issns.append(issn)
    jtitles = [
        f"Journal of {rng.choice(_WORDS).capitalize()} {rng.choice(_WORDS).capitalize()} {j}"
        for j in range(cfg.n_journals)
    ]
    referents: list[_Referent] = []
    used_pages: set[tuple[int, int, int]] = set()
    for a in range(cfg.n_referents):
        r = rng.random()
        genre = next(g for g, cut in zip(GENRES, GENRE_CUTS) if r < cut)
        atitle = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(4, 6)))
        year = rng.randint(1998, 2005)
        doi = f"info:doi/10.5555/rl{a}"
        if genre == "article":
            journal = rng.randrange(cfg.n_journals)
            spage = rng.randint(1, 1400)
            while (journal, year, spage) in used_pages:
                spage = rng.randint(1, 1400)
                year = rng.randint(1998, 2005)
            used_pages.add((journal, year, spage))
            referents.append(
                _Referent(
                    index=a,
                    genre=genre,
                    atitle=atitle,
                    year=year,
                    doi=doi,
                    journal_issn=issns[journal],
                    jtitle=jtitles[journal],
                    volume=str(year - 1997),
                    issue=str(rng.randint(1, 12)),
                    spage=str(spage),
                    epage=str(spage + rng.randint(2, 30)),
                )
            )
        else:
            referents.append(_Referent(index=a, genre=genre, atitle=atitle, year=year, doi=doi))
    return referents, issns


def _descriptor(ref: _Referent, variant: str) -> EntityDescriptor:
    atitle = _typo(ref.atitle) if variant == "typo" else ref.atitle
    issn = None if variant == "noissn" else ref.journal_issn
    spage = ref.spage
    if variant == "zpage" and spage is not None:
        spage = "0" + spage
    metadata = ReferentMetadata(
        genre=ref.genre,
        atitle=atitle,
        jtitle=ref.jtitle,
        issn=issn,
        volume=ref.volume,
        issue=ref.issue,
        spage=spage,
        epage=ref.epage,
        date=str(ref.year),
    )
    # The base and no-issn forms carry the DOI; the typo and padded-page
    # forms must merge through the metadata key alone. Non-articles have no
    # key, so they always keep their identifier.
    if variant in ("base", "noissn") or ref.journal_issn is None:
        identifiers: tuple[str, ...] = (ref.doi,)
    else:
        identifiers = ()
    return EntityDescriptor(identifiers, metadata)


def generate_synthetic(config: SynthConfig) -> tuple[Iterator[UsageEvent], GroundTruth]:
    """Deterministic synthetic event stream plus its ground truth.

    The stream yields events in timestamp order. true_sessions and
    event_to_instance fill in as the stream is consumed; the other ground
    truth maps are complete on return.
    """
    config.validate()
    rng = random.Random(config.seed)
    truth = GroundTruth()

    referents, _ = _build_referents(config, rng)
    articles = [r for r in referents if r.journal_issn is not None]
    for ref in articles:
        truth.cluster_journal[ref.index] = ref.journal_issn

    # Referent popularity: Zipf over a random permutation of referents.
    perm = list(range(config.n_referents))
    rng.shuffle(perm)
    popularity = [0.0] * config.n_referents
    for rank, idx in enumerate(perm):
        popularity[idx] = (rank + 1) ** -config.referent_zipf_s
    global_sampler = _Sampler(popularity)

    by_journal: dict[str, list[int]] = {}
    for ref in articles:
        by_journal.setdefault(ref.journal_issn, []).append(ref.index)
    journal_keys = sorted(by_journal)
    journal_weights = [sum(popularity[i] for i in by_journal[j]) for j in journal_keys]
    journal_sampler = _Sampler(journal_weights)
    member_samplers = {
        j: _Sampler([popularity[i] for i in by_journal[j]]) for j in journal_keys
    }

    # Requester population; heavy hitters are the top Zipf ranks, inflated.
    requester_ids: list[str] = []
    seen_ip: set[str] = set()
    while len(requester_ids) < config.n_requesters:
        ip = f"urn:ip:{rng.randint(1, 223)}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}"
        if ip not in seen_ip:
            seen_ip.add(ip)
            requester_ids.append(ip)
    inflation = {rank: config.heavy_hitter_multiplier for rank in range(config.n_heavy_hitters)}
    counts = _zipf_quota(config.n_requesters, config.requester_zipf_s, config.n_events, inflation)
    truth.true_heavy_hitters = {requester_ids[r] for r in range(config.n_heavy_hitters)}
    truth.requester_counts = {requester_ids[r]: counts[r] for r in range(config.n_requesters)}

    gap_seconds = int(config.session_gap_minutes * 60)
    within_hi = max(6, min(gap_seconds - 30, 1740))

    # Plan rows: (ts, seq, requester, session_no, referent, variant, svc, sid)
    plan: list[tuple[int, int, int, int, int, str, int, int]] = []
    seq = 0
    for r in range(config.n_requesters):
        remaining = counts[r]
        t = SPAN_START + rng.randint(0, SPAN_SECONDS)
        session_no = 0
        while remaining > 0:
            length = min(remaining, 1 + min(24, int(rng.expovariate(1 / 3.0))))
            focused = rng.random() < 0.7 and journal_sampler.total > 0
            focus_journal = journal_keys[journal_sampler.draw(rng)] if focused else None
            for _ in range(length):
                if focus_journal is not None and rng.random() < 0.75:
                    members = by_journal[focus_journal]
                    ref_idx = members[member_samplers[focus_journal].draw(rng)]
                else:
                    ref_idx = global_sampler.draw(rng)
                ref = referents[ref_idx]
                variant = "base"
                if rng.random() < config.duplicate_variant_rate:
                    if ref.journal_issn is not None:
                        variant = ("typo", "noissn", "zpage")[rng.randrange(3)]
                    else:
                        variant = "typo"
                svc_r = rng.random()
                svc = 0 if svc_r < 0.7 else 1 if svc_r < 0.85 else 2 if svc_r < 0.95 else 3
                sid = rng.randrange(len(REFERRER_SIDS))
                plan.append((t, seq, r, session_no, ref_idx, variant, svc, sid))
                seq += 1
                t += rng.randint(5, within_hi)
            t += gap_seconds + rng.randint(60, 3600)
            session_no += 1
            remaining -= length

    plan.sort(key=lambda row: (row[0], row[1]))

    descriptor_cache: dict[tuple[int, str], tuple[EntityDescriptor, str]] = {}
    for _, _, _, _, ref_idx, variant, _, _ in plan:
        key = (ref_idx, variant)
        if key not in descriptor_cache:
            descriptor = _descriptor(referents[ref_idx], variant)
            instance = referent_instance_id(descriptor)
            descriptor_cache[key] = (descriptor, instance)
            truth.true_clusters[instance] = ref_idx

    requester_entities = {
        r: EntityDescriptor((requester_ids[r],)) for r in range(config.n_requesters)
    }
    resolver_entity = EntityDescriptor((RESOLVER_ID,))
    referrer_entities = [EntityDescriptor((f"info:sid/{sid}",)) for sid in REFERRER_SIDS]
    flag_sets = [
        frozenset({"full-text"}),
        frozenset({"abstract"}),
        frozenset({"citation"}),
        frozenset({"holding"}),
    ]
    event_rng = random.Random(config.seed ^ 0x5EED)

    def stream() -> Iterator[UsageEvent]:
        for ts, _, r, session_no, ref_idx, variant, svc, sid in plan:
            descriptor, instance = descriptor_cache[(ref_idx, variant)]
            event_id = f"urn:UUID:{uuidlib.UUID(int=event_rng.getrandbits(128), version=4)}"
            event = UsageEvent(
                event_id=event_id,
                event_timestamp=datetime.fromtimestamp(ts, tz=timezone.utc),
                referent=descriptor,
                requester=requester_entities[r],
                service_type=flag_sets[svc],
                resolver=resolver_entity,
                referrer=referrer_entities[sid],
            )
            truth.true_sessions[event_id] = f"{requester_ids[r]}#{session_no}"
            truth.event_to_instance[event_id] = instance
            yield event

    return stream(), truth


def write_ground_truth(truth: GroundTruth, directory: str | Path) -> None:
    """Dump the three ground-truth maps as column-separated text files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "true_clusters.tsv", "w", encoding="utf-8") as fh:
        for instance in sorted(truth.true_clusters):
            fh.write(f"{instance}\t{truth.true_clusters[instance]}\n")
    with open(directory / "true_heavy_hitters.tsv", "w", encoding="utf-8") as fh:
        for requester in sorted(truth.true_heavy_hitters):
            fh.write(requester + "\n")
    with open(directory / "true_sessions.tsv", "w", encoding="utf-8") as fh:
        for event_id in sorted(truth.true_sessions):
            fh.write(f"{event_id}\t{truth.true_sessions[event_id]}\n")
