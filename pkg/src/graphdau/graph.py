"""Weighted undirected graphs, their Laplacian/incidence operators, and generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


class GraphError(ValueError):
    """Raised for structurally invalid graphs or generator arguments."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted undirected graph without self loops.

    Edges are stored as three parallel arrays with ``src < dst`` on every
    row. The row order is the edge order used by the incidence operator.
    """

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    coords: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.src, self.dst, self.weight)]

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency matrix W."""
        if "W" not in self._cache:
            n = self.n_nodes
            rows = np.concatenate([self.src, self.dst])
            cols = np.concatenate([self.dst, self.src])
            vals = np.concatenate([self.weight, self.weight])
            W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
            W.sort_indices()
            self._cache["W"] = W
        return self._cache["W"]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency().sum(axis=1)).ravel()

    def n_components(self) -> int:
        return int(connected_components(self.adjacency(), directed=False)[0])

    def is_connected(self) -> bool:
        return self.n_nodes > 0 and self.n_components() == 1


def build_graph(
    n_nodes: int,
    edges: Iterable[Sequence[float]],
    coords=None,
    labels=None,
) -> Graph:
    """Validate an edge list and return a :class:`Graph`.

    Each edge is ``(i, j, w)``; endpoints are canonicalized so that ``i < j``
    and edges are stored sorted by ``(i, j)``.
    Self loops, duplicate undirected edges, nonpositive weights and
    out-of-range indices are rejected with :class:`GraphError`.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 1:
        raise GraphError(f"n_nodes must be positive, got {n_nodes}")
    edge_list = [tuple(e) for e in edges]
    m = len(edge_list)
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    weight = np.empty(m, dtype=float)
    seen = set()
    for s, e in enumerate(edge_list):
        if len(e) != 3:
            raise GraphError(f"edge {s} must be (i, j, w), got {e!r}")
        i, j, w = int(e[0]), int(e[1]), float(e[2])
        if i == j:
            raise GraphError(f"self loop at node {i} (edge {s})")
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise GraphError(f"edge {s} index out of range [0, {n_nodes}): ({i}, {j})")
        if not np.isfinite(w) or w <= 0:
            raise GraphError(f"edge {s} weight must be positive and finite, got {w}")
        i, j = min(i, j), max(i, j)
        if (i, j) in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        src[s], dst[s], weight[s] = i, j, w
    if coords is not None:
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[0] != n_nodes:
            raise GraphError(f"coords must have shape ({n_nodes}, d), got {coords.shape}")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n_nodes,):
            raise GraphError(f"labels must have length {n_nodes}")
    return _from_arrays(n_nodes, src, dst, weight, coords, labels)


def _from_arrays(n, src, dst, weight, coords=None, labels=None) -> Graph:
    # trusted internal constructor: inputs already canonical and deduplicated
    order = np.lexsort((dst, src))
    return Graph(
        int(n),
        np.asarray(src, dtype=np.int64)[order],
        np.asarray(dst, dtype=np.int64)[order],
        np.asarray(weight, dtype=float)[order],
        None if coords is None else np.asarray(coords, dtype=float),
        None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def graph_operators(g: Graph) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Return ``(L, M)``: combinatorial Laplacian and weighted incidence matrix.

    Row ``s`` of ``M`` holds ``+sqrt(w)`` at ``src[s]`` and ``-sqrt(w)`` at
    ``dst[s]``, so ``M.T @ M == L``.
    """
    if "ops" not in g._cache:
        m, n = g.n_edges, g.n_nodes
        sw = np.sqrt(g.weight)
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([g.src, g.dst]).ravel()
        vals = np.column_stack([sw, -sw]).ravel()
        M = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        M.sort_indices()
        W = g.adjacency()
        L = (sp.diags(g.degrees()) - W).tocsr()
        L.sort_indices()
        g._cache["ops"] = (L, M)
    return g._cache["ops"]


def gaussian_weights(dist, sigma):
    return np.exp(-np.asarray(dist) ** 2 / (2.0 * sigma**2))


def knn_graph(coords, k: int, sigma: Optional[float] = None) -> Graph:
    """Symmetrized k-nearest-neighbor graph with Gaussian kernel weights.

    An edge is kept when either endpoint selects the other. ``sigma=None``
    uses the mean k-NN distance as kernel width; a float fixes it.
    """
    pts = np.asarray(coords, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise GraphError("knn_graph needs a non-empty (n, d) coordinate array")
    n = pts.shape[0]
    k = int(k)
    if k < 1 or k >= n:
        raise GraphError(f"k must satisfy 1 <= k < n_points={n}, got {k}")
    if np.unique(pts, axis=0).shape[0] != n:
        raise GraphError("duplicate points in knn_graph input")
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k + 1)
    # column 0 is the point itself (points are distinct)
    dist, idx = dist[:, 1:], idx[:, 1:]
    if sigma is None:
        sigma = float(dist.mean())
    elif sigma <= 0:
        raise GraphError(f"sigma must be positive, got {sigma}")
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    src, dst = np.minimum(rows, cols), np.maximum(rows, cols)
    key = np.unique(src * n + dst)
    src, dst = key // n, key % n
    d = np.linalg.norm(pts[src] - pts[dst], axis=1)
    return _from_arrays(n, src, dst, gaussian_weights(d, sigma), coords=pts)


def _repair_connectivity(n, src, dst, weight, coords, rng, weight_fn):
    """Join components by adding one edge per extra component."""
    src, dst, weight = list(src), list(dst), list(weight)
    while True:
        W = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
        ncomp, comp = connected_components(W, directed=False)
        if ncomp <= 1:
            break
        inside = np.flatnonzero(comp == comp[0])
        outside = np.flatnonzero(comp != comp[0])
        if coords is not None:
            tree = cKDTree(coords[outside])
            d, j = tree.query(coords[inside], k=1)
            a = int(np.argmin(d))
            u, v, w = int(inside[a]), int(outside[j[a]]), weight_fn(float(d[a]))
        else:
            u, v, w = int(rng.choice(inside)), int(rng.choice(outside)), 1.0
        src.append(min(u, v))
        dst.append(max(u, v))
        weight.append(w)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(weight)


def community_graph(n: int, n_clusters: int = 3, seed: int = 0,
                    p_in: float = 0.3, p_out: float = 0.01) -> Graph:
    if n_clusters < 1 or n < n_clusters:
        raise GraphError(f"community graph needs n >= n_clusters >= 1, got n={n}, k={n_clusters}")
    rng = np.random.default_rng(seed)
    sizes = np.full(n_clusters, n // n_clusters)
    sizes[: n % n_clusters] += 1
    labels = np.repeat(np.arange(n_clusters), sizes)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, p_in, p_out)
    keep = rng.random(iu.shape[0]) < p
    src, dst = iu[keep], ju[keep]
    src, dst, w = _repair_connectivity(n, src, dst, np.ones(src.shape[0]), None, rng, None)
    return _from_arrays(n, src, dst, w, labels=labels)


def sensor_graph(n: int, k: int = 6, seed: int = 0) -> Graph:
    if n < 2:
        raise GraphError(f"sensor graph needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    k = min(k, n - 1)
    g = knn_graph(pts, k)
    d_knn = cKDTree(pts).query(pts, k=k + 1)[0][:, 1:]
    sigma = float(d_knn.mean())
    src, dst, w = _repair_connectivity(
        n, g.src, g.dst, g.weight, pts, rng, lambda d: float(gaussian_weights(d, sigma))
    )
    return _from_arrays(n, src, dst, w, coords=pts)


def synth_graph(kind: str, n: int, seed: int = 0, *, n_clusters: int = 3, k: int = 6,
                p_in: float = 0.3, p_out: float = 0.01) -> Graph:
    """Generate a connected synthetic graph.

    ``kind="community"`` yields dense intra-cluster / sparse inter-cluster
    unit-weight edges with cluster ids in ``Graph.labels``;
    ``kind="sensor"`` yields uniform points in the unit square joined by a
    Gaussian-weighted k-NN graph. Output is a pure function of the arguments.
    """
    if kind == "community":
        return community_graph(n, n_clusters, seed, p_in, p_out)
    if kind == "sensor":
        return sensor_graph(n, k, seed)
    raise GraphError(f"unknown graph kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray
    k: int

    def clusters(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.k)]


def partition(g: Graph, k: int, seed: int = 0) -> Partition:
    """Spectral clustering into ``k`` nonempty clusters.

    Embeds nodes with the first ``k`` Laplacian eigenvectors and runs seeded
    k-means on the rows.
    """
    from sklearn.cluster import KMeans

    from .spectral import eigendecompose

    k = int(k)
    if k < 1 or k > g.n_nodes:
        raise GraphError(f"partition needs 1 <= k <= n_nodes={g.n_nodes}, got {k}")
    if k == 1:
        return Partition(np.zeros(g.n_nodes, dtype=np.int64), 1)
    if k == g.n_nodes:
        return Partition(np.arange(g.n_nodes, dtype=np.int64), k)
    L, _ = graph_operators(g)
    emb = eigendecompose(L).eigenvectors[:, :k]
    km = KMeans(n_clusters=k, n_init=10, random_state=seed).fit(emb)
    labels = np.asarray(km.labels_, dtype=np.int64)
    # k-means may leave a cluster empty on tied embeddings; move single nodes into it
    for c in range(k):
        if not np.any(labels == c):
            counts = np.bincount(labels, minlength=k)
            donor = np.flatnonzero(labels == np.argmax(counts))
            labels[donor[-1]] = c
    return Partition(labels, k)


def extract_subgraph(g: Graph, nodes) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on ``nodes``; returns it with the original node ids."""
    nodes = np.asarray(nodes, dtype=np.int64)
    local = np.full(g.n_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.shape[0])
    keep = (local[g.src] >= 0) & (local[g.dst] >= 0)
    a, b = local[g.src[keep]], local[g.dst[keep]]
    coords = None if g.coords is None else g.coords[nodes]
    sub = _from_arrays(nodes.shape[0], np.minimum(a, b), np.maximum(a, b), g.weight[keep], coords)
    return sub, nodes


def relabel(g: Graph, perm) -> Graph:
    """Graph with node ``i`` renamed to ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    a, b = perm[g.src], perm[g.dst]
    coords = None
    if g.coords is not None:
        coords = np.empty_like(g.coords)
        coords[perm] = g.coords
    labels = None
    if g.labels is not None:
        labels = np.empty_like(g.labels)
        labels[perm] = g.labels
    return Graph(g.n_nodes, np.minimum(a, b), np.maximum(a, b), g.weight.copy(), coords, labels)


def graph_to_dict(g: Graph) -> dict:
    out = {"n": g.n_nodes, "edges": [[i, j, w] for i, j, w in g.edges]}
    if g.coords is not None:
        out["coords"] = g.coords.tolist()
    if g.labels is not None:
        out["labels"] = g.labels.tolist()
    return out


def graph_from_dict(d: dict) -> Graph:
    try:
        n = d["n"]
        edges = d["edges"]
    except KeyError as exc:
        raise GraphError(f"graph JSON missing field {exc.args[0]!r}") from None
    return build_graph(n, edges, d.get("coords"), d.get("labels"))


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g)))


def load_graph(path) -> Graph:
    return graph_from_dict(json.loads(Path(path).read_text()))
