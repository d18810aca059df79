"""Read-only HTTP API over the pipeline artifacts.

Serves recommendations, rankings, the interest map, the requester report
and collection statistics to clients (including the explorer UI). The API
never mutates state; artifacts load once per snapshot and swap atomically
when the pipeline directory changes on disk.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

from fastapi import FastAPI, Query as QueryParam
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pathlib import Path

from .graph import TRANSITION, RelationGraph
from .pipeline import Artifacts, PipelineConfig
from .recommend import (
    AmbiguousQuery,
    ClusterIndex,
    NotFound,
    NotInGraph,
    Query,
    recommend,
    resolve_query,
)
from .model import ReferentMetadata

__all__ = ["build_app", "ArtifactSnapshot"]

log = logging.getLogger(__name__)


@dataclass
class ArtifactSnapshot:
    index: ClusterIndex
    article_graph: RelationGraph
    rankings: list[dict]
    map_points: list[tuple[str, float, float]]
    agents: list[tuple[int, str, int, bool]]
    report: dict


def _load_snapshot(artifacts: Artifacts, graph_mode: str) -> ArtifactSnapshot:
    clusters = artifacts.read_clusters()
    return ArtifactSnapshot(
        index=ClusterIndex(clusters),
        article_graph=artifacts.read_article_graph(directed=graph_mode == TRANSITION),
        rankings=artifacts.read_rankings(),
        map_points=artifacts.read_map(),
        agents=artifacts.read_agents(),
        report=artifacts.read_report(),
    )


class _SnapshotHolder:
    """Lazy, thread-safe artifact loading with reload on manifest change."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.artifacts = Artifacts(config.artifacts_dir)
        self._lock = threading.Lock()
        self._snapshot: ArtifactSnapshot | None = None
        self._loaded_mtime: float | None = None

    def get(self) -> ArtifactSnapshot:
        manifest = self.artifacts.path("manifest.json")
        required = ("report.json", "instances.tsv", "clusters.tsv")
        if not manifest.exists() or not self.artifacts.exists(*required):
            raise FileNotFoundError("pipeline artifacts missing; run the pipeline first")
        mtime = manifest.stat().st_mtime
        with self._lock:
            if self._snapshot is None or mtime != self._loaded_mtime:
                self._snapshot = _load_snapshot(self.artifacts, self.config.graph_mode)
                self._loaded_mtime = mtime
            return self._snapshot


def _error(status: int, reason: str, detail: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": reason, "detail": detail, **extra})


def build_app(config: PipelineConfig, static_dir: str | Path | None = None) -> FastAPI:
    """Assemble the FastAPI application over an artifacts directory."""
    app = FastAPI(title="resolverlogs", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"], allow_headers=["*"]
    )
    holder = _SnapshotHolder(config)

    @app.exception_handler(FileNotFoundError)
    async def artifacts_missing(request, exc):
        return _error(503, "artifacts_missing", str(exc))

    @app.get("/api/recommend")
    def api_recommend(
        doi: str | None = None,
        title: str | None = None,
        issn: str | None = None,
        year: str | None = None,
        spage: str | None = None,
        k: int = QueryParam(default=10, ge=1, le=100),
    ):
        snapshot = holder.get()
        identifier = None
        if doi:
            identifier = doi if ":" in doi.split("/", 1)[0] else f"info:doi/{doi}"
        metadata = None
        if title or issn or year or spage:
            metadata = ReferentMetadata(atitle=title, issn=issn, date=year, spage=spage)
        try:
            query = Query(identifier=identifier, metadata=metadata)
            query.validate()
        except ValueError as exc:
            return _error(400, "bad_query", str(exc))
        try:
            cluster = resolve_query(query, snapshot.index)
        except NotFound as exc:
            return _error(404, "not_found", str(exc))
        except AmbiguousQuery as exc:
            return _error(
                409,
                "ambiguous_query",
                str(exc),
                candidates=[
                    {"cluster": c, "label": snapshot.index.label(c)} for c in exc.candidates
                ],
            )
        return {"cluster": cluster, "label": snapshot.index.label(cluster), **_recommend_payload(snapshot, cluster, k)}

    @app.get("/api/recommend/{cluster}")
    def api_recommend_cluster(cluster: int, k: int = QueryParam(default=10, ge=1, le=100)):
        snapshot = holder.get()
        if cluster not in snapshot.index.clusters.cluster_metadata:
            return _error(404, "not_found", f"unknown cluster {cluster}")
        return {"cluster": cluster, "label": snapshot.index.label(cluster), **_recommend_payload(snapshot, cluster, k)}

    @app.get("/api/rankings")
    def api_rankings(limit: int = QueryParam(default=50, ge=1)):
        snapshot = holder.get()
        return {"rows": snapshot.rankings[:limit]}

    @app.get("/api/map")
    def api_map():
        snapshot = holder.get()
        return {
            "points": [{"label": n, "x": x, "y": y} for n, x, y in snapshot.map_points]
        }

    @app.get("/api/agents")
    def api_agents(limit: int = QueryParam(default=100, ge=1)):
        snapshot = holder.get()
        return {
            "rows": [
                {"rank": rank, "requester": requester, "count": count, "flagged": flagged}
                for rank, requester, count, flagged in snapshot.agents[:limit]
            ]
        }

    @app.get("/api/stats")
    def api_stats():
        snapshot = holder.get()
        return snapshot.report

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def _recommend_payload(snapshot: ArtifactSnapshot, cluster: int, k: int) -> dict:
    try:
        items = recommend(cluster, snapshot.article_graph, snapshot.index, k)
        isolated = False
    except NotInGraph:
        items, isolated = [], True
    return {
        "isolated": isolated,
        "recommendations": [
            {"rank": r.rank, "cluster": r.cluster, "label": r.label, "score": r.score}
            for r in items
        ],
    }
