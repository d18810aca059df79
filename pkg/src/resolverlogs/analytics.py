"""Usage-based ranking and mapping over relationship graphs.

Weighted PageRank by power iteration (uniform teleport, dangling mass
spread uniformly), a 2-D principal-component map of usage similarity, and
a comparison of usage ranks against externally supplied citation impact
factors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import RelationGraph

__all__ = [
    "EmptyIntersection",
    "FileUnreadable",
    "BadNumber",
    "RankVector",
    "MapPoint",
    "PcaMap",
    "ComparisonRow",
    "pagerank",
    "pca_map",
    "compare_rankings",
    "load_impact_factors",
]

log = logging.getLogger(__name__)


class EmptyIntersection(ValueError):
    """Rank vector and impact factors share no node."""


class FileUnreadable(OSError):
    """The impact factor file cannot be read."""


class BadNumber(ValueError):
    """A numeric field failed to parse; the message names the line."""


@dataclass
class RankVector:
    """PageRank scores (non-negative, summing to 1) with convergence info."""

    scores: dict[str, float]
    damping: float
    iterations: int
    residual: float
    converged: bool = True

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True)
class MapPoint:
    node: str
    x: float
    y: float


@dataclass
class PcaMap:
    points: list[MapPoint]
    explained_variance: tuple[float, float]
    degenerate: bool = False


@dataclass(frozen=True)
class ComparisonRow:
    rank: int
    node: str
    prw: float
    if_value: float
    deviation_flag: bool


def pagerank(
    graph: RelationGraph,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> RankVector:
    """Weighted PageRank over the graph's edge weights.

    Transition probability i->j is w(i,j) / out_weight(i); dangling nodes
    redistribute uniformly; teleport is uniform. Converges when the L1
    change drops below tol; on max_iter the best iterate is returned with
    converged=False. Deterministic for a fixed graph.
    """
    if graph.n_nodes == 0:
        raise ValueError("graph is empty")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must be in (0, 1)")
    n = graph.n_nodes
    edge_items = sorted(graph.edges.items())
    src = np.fromiter((i for (i, _), _ in edge_items), dtype=np.int64, count=len(edge_items))
    dst = np.fromiter((j for (_, j), _ in edge_items), dtype=np.int64, count=len(edge_items))
    w = np.fromiter((wt for _, wt in edge_items), dtype=np.float64, count=len(edge_items))
    out_weight = np.zeros(n)
    np.add.at(out_weight, src, w)
    dangling = out_weight == 0
    prob = w / out_weight[src]

    scores = np.full(n, 1.0 / n)
    iterations = 0
    residual = float("inf")
    for iterations in range(1, max_iter + 1):
        flow = np.zeros(n)
        np.add.at(flow, dst, scores[src] * prob)
        dangling_mass = scores[dangling].sum()
        new = (1.0 - damping) / n + damping * (flow + dangling_mass / n)
        residual = float(np.abs(new - scores).sum())
        scores = new
        if residual < tol:
            break
    converged = residual < tol
    if not converged:
        log.warning("pagerank did not converge: residual %.3g after %d iterations", residual, iterations)
    return RankVector(
        scores={graph.labels[i]: float(scores[i]) for i in range(n)},
        damping=damping,
        iterations=iterations,
        residual=residual,
        converged=converged,
    )


def _fix_signs(directions: np.ndarray) -> np.ndarray:
    # One column per component; make each component's largest-magnitude
    # loading positive (first index wins ties).
    fixed = directions.copy()
    for c in range(fixed.shape[1]):
        col = fixed[:, c]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            fixed[:, c] = -col
    return fixed


def pca_features(graph: RelationGraph, nodes: list[int]) -> np.ndarray:
    """Feature rows for the selected nodes: symmetrized then row-normalized
    adjacency restricted to those nodes."""
    index = {node: k for k, node in enumerate(nodes)}
    m = len(nodes)
    a = np.zeros((m, m))
    for (i, j), w in graph.edges.items():
        ki, kj = index.get(i), index.get(j)
        if ki is not None and kj is not None:
            a[ki, kj] += w
    sym = (a + a.T) / 2.0
    row_sums = sym.sum(axis=1, keepdims=True)
    row_sums[row_sums == 0] = 1.0
    return sym / row_sums


def pca_map(graph: RelationGraph, top_n: int = 500) -> PcaMap:
    """Place the busiest nodes on a 2-D map of usage similarity.

    Selects the top_n nodes by total incident weight, builds the
    symmetrized row-normalized adjacency restricted to them, mean-centers
    columns and projects onto the top two principal directions
    (descending eigenvalue; signs fixed so each component's largest
    loading is positive). A rank-deficient configuration zeroes the second
    coordinate and sets the degenerate flag.
    """
    if graph.n_nodes < 3:
        raise ValueError("pca_map needs at least 3 nodes")
    incident = graph.incident_weight()
    chosen = sorted(
        range(graph.n_nodes), key=lambda node: (-incident.get(node, 0.0), graph.labels[node])
    )[:top_n]
    features = pca_features(graph, chosen)
    centered = features - features.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(len(chosen) - 1, 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    directions = _fix_signs(eigenvectors[:, order[:2]])
    coords = centered @ directions

    total = float(eigenvalues.sum())
    explained = (
        float(eigenvalues[0]) / total if total > 0 else 0.0,
        float(eigenvalues[1]) / total if total > 0 and len(eigenvalues) > 1 else 0.0,
    )
    degenerate = len(eigenvalues) < 2 or eigenvalues[1] <= max(total, 1.0) * 1e-12
    if degenerate:
        coords[:, 1] = 0.0
        log.warning("pca_map: feature matrix has rank < 2; second coordinate zeroed")
    points = [
        MapPoint(graph.labels[node], float(coords[k, 0]), float(coords[k, 1]))
        for k, node in enumerate(chosen)
    ]
    return PcaMap(points, explained, degenerate)


def compare_rankings(
    rank_vector: RankVector,
    impact_factors: dict[str, float],
    flag_fraction: float = 0.25,
) -> list[ComparisonRow]:
    """Usage rank vs citation rank over the common nodes.

    Flags a node when its usage and impact-factor rank positions differ by
    more than flag_fraction of the shared population. The displayed score
    is the PageRank probability scaled by the population size.
    """
    common = sorted(set(rank_vector.scores) & set(impact_factors))
    if not common:
        raise EmptyIntersection("no shared nodes between rankings and impact factors")
    n = len(common)
    by_prw = sorted(common, key=lambda node: (-rank_vector.scores[node], node))
    by_if = sorted(common, key=lambda node: (-impact_factors[node], node))
    prw_rank = {node: k + 1 for k, node in enumerate(by_prw)}
    if_rank = {node: k + 1 for k, node in enumerate(by_if)}
    rows = []
    for node in by_prw:
        deviation = abs(prw_rank[node] - if_rank[node]) / n > flag_fraction
        rows.append(
            ComparisonRow(
                rank=prw_rank[node],
                node=node,
                prw=rank_vector.scores[node] * n,
                if_value=impact_factors[node],
                deviation_flag=deviation,
            )
        )
    return rows


def load_impact_factors(path: str | Path) -> dict[str, float]:
    """Two-column text file `journal_key<TAB>value`; last duplicate wins
    with a warning. Raises FileUnreadable / BadNumber(line)."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read impact factor file {path}: {exc}") from exc
    out: dict[str, float] = {}
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise BadNumber(f"line {lineno}: expected `key<TAB>value`, got {line!r}")
            key, raw = parts[0].strip(), parts[1].strip()
            try:
                value = float(raw)
            except ValueError as exc:
                raise BadNumber(f"line {lineno}: not a number: {raw!r}") from exc
            if key in out:
                log.warning("impact factor file %s line %d: duplicate key %r, last wins", path, lineno, key)
            out[key] = value
    return out
