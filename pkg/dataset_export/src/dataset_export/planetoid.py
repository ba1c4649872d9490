"""Parser for the pickled citation-network distribution (Cora, Citeseer,
Pubmed): ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}."""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

PLANETOID_BASE = "https://github.com/kimiyoung/planetoid/raw/master/data"
PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")


def file_names(name: str):
    return [f"ind.{name}.{part}" for part in PARTS]


def _load_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def parse(name: str, cache_dir) -> dict:
    """Reassemble the full node ordering from the pickled shards.

    Returns features (dense), directed arc list, labels (-1 where the
    one-hot row is empty), the official splits, and bookkeeping counts.
    """
    cache = Path(cache_dir)
    x = _load_pickle(cache / f"ind.{name}.x")
    y = _load_pickle(cache / f"ind.{name}.y")
    tx = _load_pickle(cache / f"ind.{name}.tx")
    ty = _load_pickle(cache / f"ind.{name}.ty")
    allx = _load_pickle(cache / f"ind.{name}.allx")
    ally = _load_pickle(cache / f"ind.{name}.ally")
    graph = _load_pickle(cache / f"ind.{name}.graph")
    test_idx = np.loadtxt(cache / f"ind.{name}.test.index", dtype=np.int64)

    test_sorted = np.sort(test_idx)
    n_nodes = int(max(test_sorted.max() + 1, allx.shape[0] + tx.shape[0],
                      max(graph.keys()) + 1))

    features = sp.lil_matrix((n_nodes, allx.shape[1]), dtype=np.float64)
    features[:allx.shape[0]] = allx.todense()
    # isolated test nodes absent from test.index keep zero rows
    features[test_idx] = tx.todense()
    features = np.asarray(features.todense())

    onehot = np.zeros((n_nodes, ally.shape[1]))
    onehot[:ally.shape[0]] = ally
    onehot[test_idx] = ty
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1)

    arcs = []
    for u, neighbors in graph.items():
        for v in neighbors:
            arcs.append((int(u), int(v)))

    test_set = set(int(i) for i in test_sorted)
    n_train = x.shape[0]
    splits = {
        "train": list(range(n_train)),
        # the 500 nodes after the training block, clamped in range and
        # disjoint from the test block (a no-op on the real distributions)
        "val": [i for i in range(n_train, n_train + 500)
                if i < n_nodes and i not in test_set],
        "test": [int(i) for i in test_sorted],
    }
    return {
        "features": features,
        "arcs": arcs,
        "labels": labels.astype(np.int64),
        "n_classes": int(ally.shape[1]),
        "splits": splits,
        "split_source": "official-planetoid",
    }
