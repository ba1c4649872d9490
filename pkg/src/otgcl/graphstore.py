"""Dataset model, on-disk container format, adjacency normalization, SBM generator.

Container directory layout (all files newline-terminated, 0-based ids):
  meta.json          {"n_nodes": N, "n_features": C, "n_classes": K}
  edges.tsv          one "u<TAB>v" per line with u < v, each pair once
  features.tsv       one row per node, C tab-separated decimals (9 significant digits)
  labels.tsv         one integer per line, -1 = unlabeled
  split_train.tsv    one node id per line
  split_val.tsv
  split_test.tsv
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent container directories."""


@dataclass(frozen=True)
class Graph:
    """Immutable full dataset: features, undirected edges, labels, splits."""

    n_nodes: int
    n_features: int
    n_classes: int
    edges: tuple  # tuple of (u, v) with u < v, each unordered pair once
    features: np.ndarray  # (n_nodes, n_features) float64
    labels: np.ndarray  # (n_nodes,) int64, -1 = unlabeled
    splits: dict = field(default_factory=dict)  # name -> tuple of node ids

    def __post_init__(self):
        if self.n_nodes <= 0:
            raise GraphFormatError("graph must have at least one node")
        if self.features.shape != (self.n_nodes, self.n_features):
            raise GraphFormatError(
                f"features shape {self.features.shape} != "
                f"({self.n_nodes}, {self.n_features})")
        if self.labels.shape != (self.n_nodes,):
            raise GraphFormatError("labels length != n_nodes")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise GraphFormatError(f"edge ({u}, {v}) endpoint out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphFormatError(f"duplicate edge ({u}, {v})")
            seen.add(key)
        labeled = self.labels[self.labels >= 0]
        if labeled.size and labeled.max() >= self.n_classes:
            raise GraphFormatError("label index out of range")
        all_split = []
        for name in SPLIT_NAMES:
            ids = self.splits.get(name, ())
            for i in ids:
                if not 0 <= i < self.n_nodes:
                    raise GraphFormatError(f"split {name}: node id {i} out of range")
            all_split.extend(ids)
        if len(all_split) != len(set(all_split)):
            raise GraphFormatError("splits are not pairwise disjoint")

    def adjacency_lists(self):
        """Neighbor lists, each sorted ascending."""
        neigh = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            neigh[u].append(v)
            neigh[v].append(u)
        return [sorted(ns) for ns in neigh]


def normalize_adjacency(g: Graph) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops.

    Entry (p, q) is 1/sqrt(deg_p * deg_q) when p and q are adjacent in
    A + I, else 0, with degrees counted in A + I. Dense (n, n) float64.
    """
    n = g.n_nodes
    deg = np.ones(n)  # self-loop contributes 1 everywhere
    for u, v in g.edges:
        deg[u] += 1.0
        deg[v] += 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    a_hat = np.zeros((n, n))
    idx = np.arange(n)
    a_hat[idx, idx] = inv_sqrt * inv_sqrt
    for u, v in g.edges:
        w = inv_sqrt[u] * inv_sqrt[v]
        a_hat[u, v] = w
        a_hat[v, u] = w
    return a_hat


# ---------------------------------------------------------------------------
# container I/O
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.9g" % x


def save_graph(g: Graph, dirpath) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"n_nodes": g.n_nodes, "n_features": g.n_features,
            "n_classes": g.n_classes}
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    with open(d / "edges.tsv", "w") as fh:
        for u, v in sorted((min(e), max(e)) for e in g.edges):
            fh.write(f"{u}\t{v}\n")
    with open(d / "features.tsv", "w") as fh:
        for row in g.features:
            fh.write("\t".join(_fmt(x) for x in row) + "\n")
    with open(d / "labels.tsv", "w") as fh:
        for lab in g.labels:
            fh.write(f"{int(lab)}\n")
    for name in SPLIT_NAMES:
        with open(d / f"split_{name}.tsv", "w") as fh:
            for i in g.splits.get(name, ()):
                fh.write(f"{int(i)}\n")


def _require(d: Path, fname: str) -> Path:
    p = d / fname
    if not p.is_file():
        raise GraphFormatError(f"missing {fname.split('.')[0].replace('_', ' ')} file: {p}")
    return p


def load_graph(dirpath) -> Graph:
    d = Path(dirpath)
    if not d.is_dir():
        raise GraphFormatError(f"not a directory: {d}")
    meta_path = _require(d, "meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise GraphFormatError(f"malformed meta.json: {e}") from e
    try:
        n_nodes = int(meta["n_nodes"])
        n_features = int(meta["n_features"])
        n_classes = int(meta["n_classes"])
    except (KeyError, TypeError, ValueError) as e:
        raise GraphFormatError(f"meta.json missing integer field: {e}") from e

    edges = []
    for ln, line in enumerate(_require(d, "edges.tsv").read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"edges.tsv line {ln}: expected 'u<TAB>v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise GraphFormatError(f"edges.tsv line {ln}: non-integer id") from e
        edges.append((u, v))

    feat_lines = _require(d, "features.tsv").read_text().splitlines()
    if len(feat_lines) != n_nodes:
        raise GraphFormatError(
            f"features.tsv has {len(feat_lines)} rows, meta says {n_nodes}")
    features = np.empty((n_nodes, n_features))
    for i, line in enumerate(feat_lines):
        parts = line.split("\t")
        if len(parts) != n_features:
            raise GraphFormatError(
                f"features.tsv row {i}: {len(parts)} columns, meta says {n_features}")
        try:
            features[i] = [float(x) for x in parts]
        except ValueError as e:
            raise GraphFormatError(f"features.tsv row {i}: non-numeric entry") from e

    label_lines = _require(d, "labels.tsv").read_text().splitlines()
    if len(label_lines) != n_nodes:
        raise GraphFormatError(
            f"labels.tsv has {len(label_lines)} rows, meta says {n_nodes}")
    try:
        labels = np.array([int(x) for x in label_lines], dtype=np.int64)
    except ValueError as e:
        raise GraphFormatError("labels.tsv: non-integer entry") from e
    if np.any(labels < -1) or np.any(labels >= n_classes):
        raise GraphFormatError("label index out of range")

    splits = {}
    for name in SPLIT_NAMES:
        lines = _require(d, f"split_{name}.tsv").read_text().splitlines()
        try:
            splits[name] = tuple(int(x) for x in lines if x.strip())
        except ValueError as e:
            raise GraphFormatError(f"split_{name}.tsv: non-integer id") from e

    return Graph(n_nodes=n_nodes, n_features=n_features, n_classes=n_classes,
                 edges=tuple(edges), features=features, labels=labels,
                 splits=splits)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def gen_sbm(n_per_block: int, blocks: int, p_in: float, p_out: float,
            seed: int) -> Graph:
    """Stochastic block model with one-hot-plus-noise features.

    Features are the block indicator plus N(0, 0.1^2) noise; labels are the
    block index; splits are a seeded 60/20/20 shuffle. Same seed, same graph.
    """
    if n_per_block <= 0 or blocks < 1:
        raise ValueError("gen_sbm: need n_per_block >= 1 and blocks >= 1")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("gen_sbm: probabilities must be in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B3]))
    n = n_per_block * blocks
    block_of = np.repeat(np.arange(blocks), n_per_block)

    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if block_of[u] == block_of[v] else p_out
            if p > 0.0 and rng.random() < p:
                edges.append((u, v))

    features = np.zeros((n, blocks))
    features[np.arange(n), block_of] = 1.0
    features += rng.normal(0.0, 0.1, size=features.shape)

    perm = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    splits = {
        "train": tuple(int(i) for i in perm[:n_train]),
        "val": tuple(int(i) for i in perm[n_train:n_train + n_val]),
        "test": tuple(int(i) for i in perm[n_train + n_val:]),
    }
    return Graph(n_nodes=n, n_features=blocks, n_classes=blocks,
                 edges=tuple(edges), features=features,
                 labels=block_of.astype(np.int64), splits=splits)
