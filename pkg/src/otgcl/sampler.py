"""Center sampling, BFS-induced subgraphs, and intra-subgraph distance matrices.

The feature-weighted distance mode records the shortest-path edge sets found
by Dijkstra so the resulting matrix stays differentiable through the edge
weights while the path selection itself is frozen.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

log = logging.getLogger(__name__)

STRUCTURE_MODES = ("hops", "feature-weighted")


@dataclass
class Subgraph:
    center: int  # global node id
    nodes: list  # global ids in BFS discovery order, center first
    local_adj: list  # adjacency lists over local indices, all induced edges
    index_map: np.ndarray  # local index -> global id

    @property
    def size(self) -> int:
        return len(self.nodes)

    def local_edges(self):
        """Induced edges as (u, v) local index pairs with u < v."""
        out = []
        for u, neigh in enumerate(self.local_adj):
            for v in neigh:
                if u < v:
                    out.append((u, v))
        return out


@dataclass
class StructureMatrix:
    matrix: Tensor  # (k, k), zero diagonal, symmetric
    mode: str


def sample_node_set(n_nodes: int, size: int, rng: np.random.Generator):
    """Uniform sample of center nodes without replacement."""
    if size < 2:
        raise ValueError("sample_node_set: need at least 2 centers "
                         "(the contrastive denominators need a j != i)")
    if size > n_nodes:
        log.warning("sample_node_set: size %d > n_nodes %d, clamping",
                    size, n_nodes)
        size = n_nodes
    return [int(i) for i in rng.choice(n_nodes, size=size, replace=False)]


def bfs_subgraph(g, center: int, k: int) -> Subgraph:
    """First k nodes discovered by BFS from the center, with induced edges.

    Neighbors are expanded in ascending global id so the result is invariant
    under edge-list permutation; undersized components yield the whole
    component.
    """
    if not 0 <= center < g.n_nodes:
        raise ValueError(f"bfs_subgraph: center {center} out of range")
    return bfs_subgraph_from_lists(g.adjacency_lists(), center, k)


def bfs_subgraph_from_lists(neigh, center: int, k: int) -> Subgraph:
    """Same as ``bfs_subgraph`` but reuses precomputed sorted neighbor lists."""
    if k < 1:
        raise ValueError("bfs_subgraph: k must be >= 1")
    selected = [center]
    seen = {center}
    frontier = [center]
    while frontier and len(selected) < k:
        nxt = []
        for u in frontier:
            for v in neigh[u]:
                if v not in seen:
                    seen.add(v)
                    selected.append(v)
                    nxt.append(v)
                    if len(selected) == k:
                        break
            if len(selected) == k:
                break
        frontier = nxt

    local_of = {gid: i for i, gid in enumerate(selected)}
    local_adj = [[] for _ in selected]
    for i, gid in enumerate(selected):
        for v in neigh[gid]:
            j = local_of.get(v)
            if j is not None:
                local_adj[i].append(j)
    return Subgraph(center=center, nodes=selected, local_adj=local_adj,
                    index_map=np.array(selected, dtype=np.intp))


def _hop_distances(local_adj) -> np.ndarray:
    k = len(local_adj)
    dist = np.zeros((k, k))
    for src in range(k):
        d = np.full(k, -1, dtype=np.int64)
        d[src] = 0
        queue = [src]
        while queue:
            nxt = []
            for u in queue:
                for v in local_adj[u]:
                    if d[v] < 0:
                        d[v] = d[u] + 1
                        nxt.append(v)
            queue = nxt
        if np.any(d < 0):
            raise ValueError("hop distances: subgraph is not connected")
        dist[src] = d
    return dist


def _dijkstra_paths(local_adj, weights: dict, src: int, k: int):
    """Shortest paths from src; returns (dist, predecessor edge per node)."""
    dist = np.full(k, np.inf)
    dist[src] = 0.0
    pred = {src: None}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v in local_adj[u]:
            w = weights[(min(u, v), max(u, v))]
            nd = d + w
            # strict improvement keeps the predecessor tree deterministic
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = (min(u, v), max(u, v), u)
                heapq.heappush(heap, (nd, v))
    if len(done) != k:
        raise ValueError("dijkstra: subgraph is not connected")
    return dist, pred


def structure_matrix(sub: Subgraph, feats: Tensor | None = None,
                     mode: str = "feature-weighted") -> StructureMatrix:
    """Intra-subgraph distance matrix.

    "hops": unweighted BFS distances (constant). "feature-weighted":
    shortest paths under edge weight 1 - cosine(x_u, x_v) clamped at 0;
    entries are differentiable sums of edge weights along the frozen paths.
    """
    if mode not in STRUCTURE_MODES:
        raise ValueError(f"structure_matrix: unknown mode {mode!r}")
    k = sub.size
    if mode == "hops":
        if feats is not None:
            raise ValueError("structure_matrix: hops mode takes no features")
        return StructureMatrix(Tensor(_hop_distances(sub.local_adj)), "hops")

    if feats is None:
        raise ValueError("structure_matrix: feature-weighted mode needs features")
    if feats.shape[0] != k:
        raise ValueError(
            f"structure_matrix: features have {feats.shape[0]} rows, subgraph has {k}")

    edges = sub.local_edges()
    if not edges:
        return StructureMatrix(Tensor(np.zeros((k, k))), "feature-weighted")

    us = [u for u, _ in edges]
    vs = [v for _, v in edges]
    xu = ad.gather_rows(feats, us)
    xv = ad.gather_rows(feats, vs)
    dots = ad.sum_rows(ad.mul(xu, xv))
    nu = _row_norms(xu)
    nv = _row_norms(xv)
    cos = ad.div(dots, ad.mul(nu, nv))
    w = ad.relu(ad.sadd(ad.neg(cos), 1.0))  # (m, 1), clamped at 0

    weight_vals = {e: float(w.values[i, 0]) for i, e in enumerate(edges)}
    edge_index = {e: i for i, e in enumerate(edges)}

    # path selection is frozen: run Dijkstra on detached weights, then sum the
    # tracked edge weights along each recorded path
    picker = np.zeros((k * k, len(edges)))
    for src in range(k):
        _, pred = _dijkstra_paths(sub.local_adj, weight_vals, src, k)
        for dst in range(src + 1, k):
            node = dst
            while pred[node] is not None:
                eu, ev, parent = pred[node]
                picker[src * k + dst, edge_index[(eu, ev)]] += 1.0
                node = parent
            picker[dst * k + src] = picker[src * k + dst]  # enforce symmetry

    flat = ad.matmul(Tensor(picker), w)  # (k*k, 1)
    return StructureMatrix(ad.reshape(flat, (k, k)), "feature-weighted")


def _row_norms(x: Tensor) -> Tensor:
    sq = ad.sum_rows(ad.mul(x, x))
    zero = sq.values[:, 0] == 0.0
    if zero.any():
        log.debug("structure_matrix: zero-norm feature row(s), cosine set to 0")
    guard = Tensor(np.where(zero, 1.0, 0.0)[:, None])
    return ad.sqrt(ad.add(sq, guard))
