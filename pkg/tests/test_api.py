import pytest
from fastapi.testclient import TestClient

from resolverlogs.api import build_app
from resolverlogs.graph import TRANSITION
from resolverlogs.pipeline import Artifacts, PipelineConfig, run_pipeline
from resolverlogs.recommend import ClusterIndex, recommend

from test_pipeline import build_store, write_if_file


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("api")
    truth = build_store(tmp_path / "events.log")
    write_if_file(tmp_path / "if.tsv", truth)
    config = PipelineConfig(
        store_path=tmp_path / "events.log",
        artifacts_dir=tmp_path / "artifacts",
        if_file=tmp_path / "if.tsv",
    )
    report = run_pipeline(config)
    client = TestClient(build_app(config))
    return client, config, report


def test_stats_matches_report(served):
    client, config, report = served
    response = client.get("/api/stats")
    assert response.status_code == 200
    data = response.json()
    assert data["events"] == report.events
    assert data["unique_referents"] == report.unique_referents


def test_rankings_limit_and_shape(served):
    client, _, report = served
    response = client.get("/api/rankings", params={"limit": 10})
    rows = response.json()["rows"]
    assert len(rows) == min(10, report.rankings_rows)
    assert [row["rank"] for row in rows] == list(range(1, len(rows) + 1))
    assert set(rows[0]) == {"rank", "prw", "if03", "title", "flag"}
    prws = [row["prw"] for row in rows]
    assert prws == sorted(prws, reverse=True)


def test_map_points(served):
    client, config, report = served
    points = client.get("/api/map").json()["points"]
    assert len(points) == report.journal_nodes
    assert set(points[0]) == {"label", "x", "y"}


def test_agents_rows(served):
    client, _, _ = served
    rows = client.get("/api/agents", params={"limit": 5}).json()["rows"]
    assert len(rows) == 5
    counts = [row["count"] for row in rows]
    assert counts == sorted(counts, reverse=True)


def test_recommend_matches_module_output(served):
    client, config, _ = served
    artifacts = Artifacts(config.artifacts_dir)
    clusters = artifacts.read_clusters()
    index = ClusterIndex(clusters)
    graph = artifacts.read_article_graph(directed=True)
    # pick a cluster that has a DOI and graph presence
    chosen = None
    for cluster in sorted(clusters.cluster_identifiers):
        dois = [i for i in clusters.cluster_identifiers[cluster] if i.startswith("info:doi/")]
        if dois and graph.lookup(str(cluster)) is not None:
            chosen = (cluster, dois[0])
            break
    assert chosen is not None
    cluster, doi = chosen
    response = client.get("/api/recommend", params={"doi": doi, "k": 10})
    assert response.status_code == 200
    payload = response.json()
    assert payload["cluster"] == cluster
    expected = recommend(cluster, graph, index, 10)
    assert [(r["rank"], r["cluster"]) for r in payload["recommendations"]] == [
        (r.rank, r.cluster) for r in expected
    ]
    scores = [r["score"] for r in payload["recommendations"]]
    assert scores == sorted(scores, reverse=True)
    assert len(scores) <= 10


def test_recommend_not_found(served):
    client, _, _ = served
    response = client.get("/api/recommend", params={"doi": "info:doi/10.0/none"})
    assert response.status_code == 404
    assert response.json()["error"] == "not_found"


def test_recommend_bad_query(served):
    client, _, _ = served
    assert client.get("/api/recommend").status_code == 400
    assert client.get("/api/recommend", params={"doi": "x", "k": 0}).status_code == 422


def test_api_read_only(served):
    client, config, _ = served
    before = Artifacts(config.artifacts_dir).hashes()
    for path in ("/api/stats", "/api/rankings", "/api/map", "/api/agents"):
        client.get(path)
    client.get("/api/recommend", params={"doi": "info:doi/10.5555/rl1"})
    after = Artifacts(config.artifacts_dir).hashes()
    assert before == after
    # mutating methods are not served
    assert client.post("/api/stats").status_code == 405
    assert client.delete("/api/rankings").status_code == 405


def test_missing_artifacts_503(tmp_path):
    config = PipelineConfig(
        store_path=tmp_path / "events.log", artifacts_dir=tmp_path / "nowhere"
    )
    client = TestClient(build_app(config))
    response = client.get("/api/stats")
    assert response.status_code == 503
    assert response.json()["error"] == "artifacts_missing"


def test_cli_parity_rank_output(served, capsys):
    from resolverlogs.cli import main

    client, config, _ = served
    rows = client.get("/api/rankings", params={"limit": 5}).json()["rows"]
    assert main(["rank", "--artifacts", str(config.artifacts_dir), "--limit", "5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 6  # header + 5 rows
    for row, line in zip(rows, out[1:]):
        rank, prw, if03, title, flag = line.split("\t")
        assert int(rank) == row["rank"]
        assert title == row["title"]
        assert (flag == "*") == row["flag"]
