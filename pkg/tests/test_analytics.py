import random

import numpy as np
import pytest

from resolverlogs.analytics import (
    BadNumber,
    EmptyIntersection,
    FileUnreadable,
    RankVector,
    compare_rankings,
    load_impact_factors,
    pagerank,
    pca_features,
    pca_map,
)
from resolverlogs.graph import RelationGraph


def graph_from_matrix(matrix, directed=True) -> RelationGraph:
    graph = RelationGraph(directed=directed)
    n = len(matrix)
    for i in range(n):
        graph.node_id(f"n{i:03d}")
    for i in range(n):
        for j in range(n):
            if i != j and matrix[i][j] > 0:
                if directed or i < j:
                    graph.add_edge(f"n{i:03d}", f"n{j:03d}", matrix[i][j])
    return graph


def random_digraph(rng, max_nodes=50):
    n = rng.randrange(2, max_nodes + 1)
    density = rng.uniform(0.05, 0.5)
    matrix = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                matrix[i][j] = rng.uniform(0.1, 10.0)
    return matrix


def oracle_pagerank(matrix, damping=0.85, iterations=20000):
    """Dense fixed-point iteration, written independently with numpy ops."""
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    out = a.sum(axis=1)
    p = np.zeros_like(a)
    nonzero = out > 0
    p[nonzero] = a[nonzero] / out[nonzero, None]
    v = np.full(n, 1.0 / n)
    for _ in range(iterations):
        dangling_mass = v[~nonzero].sum()
        new = (1 - damping) / n + damping * (p.T @ v + dangling_mass / n)
        if np.abs(new - v).sum() < 1e-14:
            v = new
            break
        v = new
    return v


# -- pagerank -------------------------------------------------------------------


def test_two_node_symmetry():
    graph = graph_from_matrix([[0, 1], [1, 0]])
    ranks = pagerank(graph)
    assert ranks.scores["n000"] == pytest.approx(0.5, abs=1e-9)
    assert ranks.scores["n001"] == pytest.approx(0.5, abs=1e-9)


def test_three_cycle_uniform():
    graph = graph_from_matrix([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    ranks = pagerank(graph, damping=0.85)
    for node in ("n000", "n001", "n002"):
        assert ranks.scores[node] == pytest.approx(1 / 3, abs=1e-9)


def test_matches_dense_oracle_on_random_digraphs():
    rng = random.Random(101)
    for trial in range(100):
        matrix = random_digraph(rng)
        graph = graph_from_matrix(matrix)
        ranks = pagerank(graph, tol=1e-12, max_iter=5000)
        expected = oracle_pagerank(matrix)
        got = np.array([ranks.scores[f"n{i:03d}"] for i in range(len(matrix))])
        assert np.max(np.abs(got - expected)) <= 1e-6, f"trial {trial}"


def test_scores_sum_to_one():
    rng = random.Random(55)
    for _ in range(20):
        graph = graph_from_matrix(random_digraph(rng, max_nodes=30))
        ranks = pagerank(graph)
        assert abs(sum(ranks.scores.values()) - 1.0) <= 1e-9


def test_edge_weight_scaling_invariance():
    rng = random.Random(77)
    matrix = random_digraph(rng, max_nodes=40)
    base = pagerank(graph_from_matrix(matrix), tol=1e-12)
    for c in (0.001, 3.7, 10000.0):
        scaled = [[w * c for w in row] for row in matrix]
        other = pagerank(graph_from_matrix(scaled), tol=1e-12)
        for node, score in base.scores.items():
            assert abs(other.scores[node] - score) <= 1e-9


def test_dangling_nodes_handled():
    # n001 has no out-edges; its mass redistributes uniformly
    graph = graph_from_matrix([[0, 1], [0, 0]])
    ranks = pagerank(graph, tol=1e-14)
    expected = oracle_pagerank([[0, 1], [0, 0]])
    assert ranks.scores["n000"] == pytest.approx(expected[0], abs=1e-9)
    assert ranks.scores["n001"] == pytest.approx(expected[1], abs=1e-9)
    assert sum(ranks.scores.values()) == pytest.approx(1.0, abs=1e-9)


def test_non_convergence_flagged():
    graph = graph_from_matrix([[0, 1, 0], [0, 0, 1], [1, 1, 0]], directed=True)
    ranks = pagerank(graph, tol=1e-30, max_iter=3)
    assert not ranks.converged
    assert ranks.iterations == 3
    assert abs(sum(ranks.scores.values()) - 1.0) <= 1e-9


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        pagerank(RelationGraph(directed=True))
    with pytest.raises(ValueError):
        pagerank(graph_from_matrix([[0, 1], [1, 0]]), damping=1.0)


# -- pca -----------------------------------------------------------------------


def oracle_pca_coords(features):
    """SVD route: independent of the covariance eigendecomposition path."""
    centered = features - features.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    directions = vt[:2].T.copy()
    for c in range(directions.shape[1]):
        lead = int(np.argmax(np.abs(directions[:, c])))
        if directions[lead, c] < 0:
            directions[:, c] = -directions[:, c]
    coords = centered @ directions
    var = s**2
    total = var.sum()
    explained = (var[0] / total if total > 0 else 0.0, var[1] / total if total > 0 and len(var) > 1 else 0.0)
    return coords, explained


def test_three_symmetric_nodes_equidistant():
    graph = graph_from_matrix([[0, 1, 1], [1, 0, 1], [1, 1, 0]], directed=False)
    result = pca_map(graph)
    points = {p.node: (p.x, p.y) for p in result.points}
    coords = list(points.values())
    dists = [
        np.hypot(coords[i][0] - coords[j][0], coords[i][1] - coords[j][1])
        for i in range(3)
        for j in range(i + 1, 3)
    ]
    assert max(dists) - min(dists) <= 1e-9
    assert result.explained_variance[0] == pytest.approx(result.explained_variance[1], abs=1e-9)


def test_two_cliques_separate_on_first_component():
    n = 10
    matrix = [[0.0] * n for _ in range(n)]
    for i in range(5):
        for j in range(5):
            if i != j:
                matrix[i][j] = 5.0
    for i in range(5, 10):
        for j in range(5, 10):
            if i != j:
                matrix[i][j] = 1.0
    graph = graph_from_matrix(matrix, directed=True)
    result = pca_map(graph)
    xs = {p.node: p.x for p in result.points}
    left = [xs[f"n{i:03d}"] for i in range(5)]
    right = [xs[f"n{i:03d}"] for i in range(5, 10)]
    assert max(left) < min(right) or max(right) < min(left)


def test_matches_svd_oracle_on_random_symmetric_matrices():
    rng = np.random.default_rng(2024)
    for trial in range(40):
        n = int(rng.integers(3, 31))
        raw = rng.uniform(0, 4, size=(n, n))
        sym = (raw + raw.T) / 2
        np.fill_diagonal(sym, 0.0)
        sym[sym < 1.5] = 0.0  # sparsify
        if not sym.any():
            continue
        graph = graph_from_matrix(sym.tolist(), directed=True)
        nodes = sorted(range(graph.n_nodes), key=lambda v: graph.labels[v])
        result = pca_map(graph, top_n=n)
        features = pca_features(graph, _selected_nodes(graph, n))
        expected_coords, expected_var = oracle_pca_coords(features)
        got = {p.node: (p.x, p.y) for p in result.points}
        order = _selected_nodes(graph, n)
        for k, node in enumerate(order):
            label = graph.labels[node]
            if result.degenerate:
                continue
            assert got[label][0] == pytest.approx(expected_coords[k, 0], abs=1e-8), trial
            assert got[label][1] == pytest.approx(expected_coords[k, 1], abs=1e-8), trial
        if not result.degenerate:
            assert result.explained_variance[0] == pytest.approx(expected_var[0], abs=1e-8)
            assert result.explained_variance[1] == pytest.approx(expected_var[1], abs=1e-8)
        assert result.explained_variance[0] >= result.explained_variance[1] - 1e-12


def _selected_nodes(graph, top_n):
    incident = graph.incident_weight()
    return sorted(
        range(graph.n_nodes), key=lambda node: (-incident.get(node, 0.0), graph.labels[node])
    )[:top_n]


def test_projection_directions_orthonormal():
    rng = np.random.default_rng(9)
    raw = rng.uniform(0, 3, size=(12, 12))
    sym = (raw + raw.T) / 2
    np.fill_diagonal(sym, 0.0)
    graph = graph_from_matrix(sym.tolist(), directed=True)
    features = pca_features(graph, _selected_nodes(graph, 12))
    centered = features - features.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (len(features) - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    top2 = eigenvectors[:, np.argsort(eigenvalues)[::-1][:2]]
    gram = top2.T @ top2
    assert np.allclose(gram, np.eye(2), atol=1e-8)


def test_degenerate_rank_one_flagged():
    # a path graph of 3 nodes where feature rows are rank-deficient enough
    graph = graph_from_matrix([[0, 1, 0], [1, 0, 1], [0, 1, 0]], directed=False)
    result = pca_map(graph)
    if result.degenerate:
        assert all(p.y == 0.0 for p in result.points)
    # pca_map rejects graphs below 3 nodes
    with pytest.raises(ValueError):
        pca_map(graph_from_matrix([[0, 1], [1, 0]]))


# -- ranking comparison ---------------------------------------------------------


def rank_vector(scores):
    return RankVector(scores=scores, damping=0.85, iterations=1, residual=0.0)


def test_identical_orderings_unflagged():
    scores = {f"J{i}": (10 - i) / 55.0 for i in range(10)}
    impact = {f"J{i}": 100.0 - i for i in range(10)}
    rows = compare_rankings(rank_vector(scores), impact)
    assert all(not row.deviation_flag for row in rows)
    assert [row.rank for row in rows] == list(range(1, 11))


def test_reversed_orderings_mostly_flagged():
    n = 10
    scores = {f"J{i}": (n - i) / 55.0 for i in range(n)}
    impact = {f"J{i}": float(i) for i in range(n)}
    rows = compare_rankings(rank_vector(scores), impact, flag_fraction=0.25)
    flagged = sum(1 for row in rows if row.deviation_flag)
    assert flagged >= 8


def test_table5_shape_semantics():
    # top journals agree (unflagged); a journal whose usage rank is far
    # above its citation rank gets the deviation mark, like the nursing
    # journal at usage rank 9 with IF 0.998
    scores = {"JAMA": 0.115, "SCIENCE": 0.102, "NATURE": 0.086, "NEW ENGL J MED": 0.055}
    impact = {"JAMA": 21.455, "SCIENCE": 29.781, "NATURE": 30.979, "NEW ENGL J MED": 34.833}
    fillers = [f"FILLER {i:02d}" for i in range(36)]
    for k, name in enumerate(fillers):
        scores[name] = 0.04 - k * 0.001
        impact[name] = 20.0 - k * 0.5
    # usage rank 9 (between FILLER 03 and 04), bottom citation rank
    scores["J ADV NURS"] = 0.0365
    impact["J ADV NURS"] = 0.998
    rows = compare_rankings(rank_vector(scores), impact)
    by_node = {row.node: row for row in rows}
    n = len(rows)
    assert not by_node["JAMA"].deviation_flag
    assert not by_node["SCIENCE"].deviation_flag
    assert not by_node["NATURE"].deviation_flag
    assert by_node["J ADV NURS"].rank == 9
    assert by_node["J ADV NURS"].deviation_flag
    # display scaling: probability times population size
    assert by_node["JAMA"].prw == pytest.approx(0.115 * n)
    # rows sorted by usage score descending
    assert [row.rank for row in rows] == list(range(1, n + 1))


def test_permutation_stability():
    rng = random.Random(8)
    scores = {f"J{i}": rng.random() for i in range(20)}
    impact = {f"J{i}": rng.random() for i in range(20)}
    rows_a = compare_rankings(rank_vector(dict(scores)), dict(impact))
    shuffled = list(scores.items())
    rng.shuffle(shuffled)
    rows_b = compare_rankings(rank_vector(dict(shuffled)), dict(reversed(list(impact.items()))))
    assert rows_a == rows_b


def test_empty_intersection():
    with pytest.raises(EmptyIntersection):
        compare_rankings(rank_vector({"A": 1.0}), {"B": 2.0})


def test_restricted_to_intersection():
    scores = {"A": 0.6, "B": 0.3, "ONLY_USAGE": 0.1}
    impact = {"A": 2.0, "B": 1.0, "ONLY_IF": 9.0}
    rows = compare_rankings(rank_vector(scores), impact)
    assert {row.node for row in rows} == {"A", "B"}


# -- impact factor file -----------------------------------------------------------


def test_load_impact_factors(tmp_path):
    path = tmp_path / "if.tsv"
    path.write_text("SCIENCE\t29.781\nNATURE\t30.979\n# comment\n\nSCIENCE\t29.9\n")
    values = load_impact_factors(path)
    assert values["NATURE"] == 30.979
    assert values["SCIENCE"] == 29.9  # last duplicate wins


def test_load_impact_factors_empty(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    assert load_impact_factors(path) == {}


def test_load_impact_factors_bad_number(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("SCIENCE\t29.781\nNATURE\t30.979\nX\tabc\n")
    with pytest.raises(BadNumber) as err:
        load_impact_factors(path)
    assert "line 3" in str(err.value)


def test_load_impact_factors_unreadable(tmp_path):
    with pytest.raises(FileUnreadable):
        load_impact_factors(tmp_path / "missing.tsv")
