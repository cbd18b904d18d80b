"""Isomap: k-NN graph, geodesic distances, classical MDS."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from .eigen import top_eigenpairs

log = logging.getLogger(__name__)


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def knn_graph(X, k: int) -> list[dict[int, float]]:
    """Symmetric k-nearest-neighbour graph as adjacency dicts (i -> {j: distance})."""
    dist = pairwise_distances(X)
    n = len(dist)
    if not 1 <= k < n:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        nbrs = [j for j in order if j != i][:k]
        for j in nbrs:
            d = float(dist[i, j])
            adj[i][int(j)] = d
            adj[int(j)][i] = d
    return adj


def dijkstra(adj: list[dict[int, float]], source: int) -> np.ndarray:
    """Single-source shortest paths with a binary heap; unreachable nodes get inf."""
    dist = np.full(len(adj), np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(len(adj), dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u].items():
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def connected_components(adj: list[dict[int, float]]) -> np.ndarray:
    label = np.full(len(adj), -1)
    cur = 0
    for s in range(len(adj)):
        if label[s] >= 0:
            continue
        stack = [s]
        label[s] = cur
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = cur
                    stack.append(v)
        cur += 1
    return label


def geodesic_distances(adj: list[dict[int, float]]) -> np.ndarray:
    return np.stack([dijkstra(adj, s) for s in range(len(adj))])


def double_center(sq: np.ndarray) -> np.ndarray:
    """``-1/2 J S J`` for a squared-distance matrix ``S``."""
    row = sq.mean(axis=1, keepdims=True)
    col = sq.mean(axis=0, keepdims=True)
    return -0.5 * (sq - row - col + sq.mean())


def classical_mds(dist: np.ndarray, out_dim: int):
    """Coordinates from the top eigenpairs of the double-centred squared distances.

    Returns ``(coords, eigen_result, centred_matrix)``.
    """
    B = double_center(np.asarray(dist, dtype=np.float64) ** 2)
    eig = top_eigenpairs(B, out_dim)
    coords = eig.vectors * np.sqrt(np.clip(eig.values, 0.0, None))
    return coords, eig, B


@dataclass
class IsomapResult:
    coords: np.ndarray  # (n_kept, out_dim)
    kept: np.ndarray  # indices of the input points that were embedded
    dropped: int
    eigenvalues: np.ndarray
    residuals: np.ndarray
    matrix_norm: float
    geodesics: np.ndarray


def isomap(points, k: int = 15, out_dim: int = 3) -> IsomapResult:
    """Embed ``points`` into ``out_dim`` dimensions.

    If the k-NN graph is disconnected only the largest component is embedded;
    ``kept`` and ``dropped`` report which points survived.
    """
    X = np.asarray(points, dtype=np.float64)
    n = len(X)
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    adj = knn_graph(X, k)
    comp = connected_components(adj)
    kept = np.arange(n)
    if comp.max() > 0:
        biggest = np.bincount(comp).argmax()
        kept = np.flatnonzero(comp == biggest)
        log.warning("k-NN graph has %d components; dropping %d points", comp.max() + 1, n - len(kept))
        remap = {int(old): new for new, old in enumerate(kept)}
        adj = [{remap[v]: w for v, w in adj[int(u)].items()} for u in kept]
    geo = geodesic_distances(adj)
    geo = 0.5 * (geo + geo.T)
    coords, eig, B = classical_mds(geo, min(out_dim, len(kept)))
    return IsomapResult(coords, kept, n - len(kept), eig.values, eig.residuals, float(np.linalg.norm(B)), geo)
