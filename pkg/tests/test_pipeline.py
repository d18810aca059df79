import json
from datetime import timedelta

import pytest

from resolverlogs.pipeline import Artifacts, PipelineConfig, run_pipeline, load_config_file
from resolverlogs.store import EventStore
from resolverlogs.synth import SynthConfig, generate_synthetic


def build_store(path, n_events=8000, seed=12, **synth_overrides):
    config = dict(
        n_requesters=150,
        n_referents=800,
        n_journals=25,
        n_events=n_events,
        requester_zipf_s=0.8,
        duplicate_variant_rate=0.08,
        seed=seed,
    )
    config.update(synth_overrides)
    store = EventStore(path)
    stream, truth = generate_synthetic(SynthConfig(**config))
    for event in stream:
        ds = event.event_timestamp + timedelta(days=1)
        store.append(event, clock=lambda: ds)
    store.close()
    return truth


def write_if_file(path, truth, seed=1):
    import random

    rng = random.Random(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for issn in sorted(set(truth.cluster_journal.values())):
            fh.write(f"{issn}\t{rng.uniform(0.1, 30.0):.3f}\n")


@pytest.fixture()
def pipeline_env(tmp_path):
    truth = build_store(tmp_path / "events.log")
    write_if_file(tmp_path / "if.tsv", truth)
    config = PipelineConfig(
        store_path=tmp_path / "events.log",
        artifacts_dir=tmp_path / "artifacts",
        if_file=tmp_path / "if.tsv",
    )
    return config, truth


def test_report_counts_consistent(pipeline_env):
    config, truth = pipeline_env
    report = run_pipeline(config)
    assert report.events == 8000
    assert report.instances == len(truth.true_clusters)
    # dedup merges variants: clusters == distinct generated referents
    assert report.unique_referents == len(set(truth.true_clusters.values()))
    assert 0 < report.unique_requesters <= 150
    assert set(report.referent_type_shares) >= {"article", "book"}
    assert abs(sum(report.referent_type_shares.values()) - 1.0) < 1e-3
    assert report.journal_nodes > 0 and report.journal_edges > 0
    assert report.rankings_rows > 0
    assert report.pagerank_converged


def test_artifacts_all_present(pipeline_env):
    config, _ = pipeline_env
    run_pipeline(config)
    artifacts = Artifacts(config.artifacts_dir)
    for name in Artifacts.HASHED:
        assert artifacts.path(name).exists(), name
    assert artifacts.path("manifest.json").exists()
    assert artifacts.path("timings.json").exists()


def test_rerun_is_byte_identical(pipeline_env):
    config, _ = pipeline_env
    run_pipeline(config)
    first = Artifacts(config.artifacts_dir).hashes()
    run_pipeline(config)
    second = Artifacts(config.artifacts_dir).hashes()
    assert first == second
    assert set(first) == set(Artifacts.HASHED)


def test_fresh_rebuild_matches_resumed_run(pipeline_env, tmp_path):
    config, _ = pipeline_env
    run_pipeline(config)
    resumed = Artifacts(config.artifacts_dir).hashes()
    fresh_config = PipelineConfig(
        store_path=config.store_path,
        artifacts_dir=tmp_path / "artifacts_fresh",
        if_file=config.if_file,
    )
    run_pipeline(fresh_config)
    fresh = Artifacts(fresh_config.artifacts_dir).hashes()
    assert fresh == resumed


def test_resume_skips_completed_stages(pipeline_env, caplog):
    import logging

    config, _ = pipeline_env
    run_pipeline(config)
    with caplog.at_level(logging.INFO, logger="resolverlogs.pipeline"):
        run_pipeline(config)
    reused = [r for r in caplog.records if "reused from artifacts" in r.message]
    assert len(reused) >= 5


def test_config_change_invalidates_resume(pipeline_env):
    config, _ = pipeline_env
    run_pipeline(config)
    first = Artifacts(config.artifacts_dir).hashes()
    changed = PipelineConfig(
        store_path=config.store_path,
        artifacts_dir=config.artifacts_dir,
        if_file=config.if_file,
        session_gap_minutes=5.0,
    )
    report = run_pipeline(changed)
    second = Artifacts(config.artifacts_dir).hashes()
    assert report.sessions > 0
    assert first["sessions.tsv"] != second["sessions.tsv"]


def test_empty_store_reports_zeros(tmp_path):
    EventStore(tmp_path / "events.log").close()
    config = PipelineConfig(
        store_path=tmp_path / "events.log", artifacts_dir=tmp_path / "artifacts"
    )
    report = run_pipeline(config)
    assert report.events == 0
    assert report.unique_referents == 0
    assert report.journal_nodes == 0
    assert report.rankings_rows == 0
    # needing no stage errors means run_pipeline returned normally; the
    # report records why analytic stages had nothing to do
    assert any("impact factor" in s for s in report.skipped)


def test_sessions_match_ground_truth(pipeline_env):
    config, truth = pipeline_env
    run_pipeline(config)
    sessions = Artifacts(config.artifacts_dir).read_sessions()

    def partition(mapping):
        from collections import defaultdict

        groups = defaultdict(set)
        for k, v in mapping.items():
            groups[v].add(k)
        return {frozenset(g) for g in groups.values()}

    assert partition(sessions) == partition(truth.true_sessions)


def test_report_json_shape(pipeline_env):
    config, _ = pipeline_env
    run_pipeline(config)
    data = json.loads(Artifacts(config.artifacts_dir).path("report.json").read_text())
    for key in (
        "events",
        "unique_referents",
        "unique_requesters",
        "referent_type_shares",
        "journal_nodes",
        "journal_edges",
    ):
        assert key in data
    assert "timings" not in data  # timings live outside the hashed artifact


def test_rankings_table_shape(pipeline_env):
    config, _ = pipeline_env
    run_pipeline(config)
    lines = Artifacts(config.artifacts_dir).path("rankings.tsv").read_text().splitlines()
    assert lines[0] == "rank\tprw\tif03\ttitle\tflag"
    first = lines[1].split("\t")
    assert first[0] == "1"
    float(first[1])
    float(first[2])
    assert first[4] in ("", "*")


def test_load_config_file_with_overrides(tmp_path):
    config_file = tmp_path / "app.conf"
    config_file.write_text(
        "store_path = /data/events.log\nsession_gap_minutes = 45\nweight_mode = invfreq\n"
    )
    config = load_config_file(config_file, overrides={"session_gap_minutes": "15"})
    assert str(config.store_path) == "/data/events.log"
    assert config.session_gap_minutes == 15.0
    assert config.weight_mode == "invfreq"
    with pytest.raises(ValueError):
        load_config_file(config_file, overrides={"bogus_key": "1"})


def test_stage_error_names_stage(tmp_path):
    from resolverlogs.pipeline import StageError

    build_store(tmp_path / "events.log", n_events=8000)
    config = PipelineConfig(
        store_path=tmp_path / "events.log",
        artifacts_dir=tmp_path / "artifacts",
        if_file=tmp_path / "missing_if.tsv",  # unreadable -> rankings stage fails
    )
    with pytest.raises(StageError) as err:
        run_pipeline(config)
    assert err.value.stage == "rankings"
