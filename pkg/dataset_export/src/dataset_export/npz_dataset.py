"""Parser for the CSR-packed npz benchmark distribution (Coauthor-CS)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

COAUTHOR_CS_URL = ("https://github.com/shchur/gnn-benchmark/raw/master/data/"
                   "npz/ms_academic_cs.npz")


def parse(path, split_seed: int = 0) -> dict:
    """No official split is published; a seeded 60/20/20 shuffle is recorded."""
    with np.load(Path(path), allow_pickle=True) as npz:
        adj = sp.csr_matrix((npz["adj_data"], npz["adj_indices"],
                             npz["adj_indptr"]), shape=tuple(npz["adj_shape"]))
        attr = sp.csr_matrix((npz["attr_data"], npz["attr_indices"],
                              npz["attr_indptr"]), shape=tuple(npz["attr_shape"]))
        labels = np.asarray(npz["labels"], dtype=np.int64)

    coo = adj.tocoo()
    arcs = list(zip(coo.row.tolist(), coo.col.tolist()))
    n = adj.shape[0]

    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    splits = {
        "train": [int(i) for i in perm[:n_train]],
        "val": [int(i) for i in perm[n_train:n_train + n_val]],
        "test": [int(i) for i in perm[n_train + n_val:]],
    }
    return {
        "features": np.asarray(attr.todense(), dtype=np.float64),
        "arcs": arcs,
        "labels": labels,
        "n_classes": int(labels.max()) + 1,
        "splits": splits,
        "split_source": f"seeded-60/20/20(seed={split_seed})",
    }
