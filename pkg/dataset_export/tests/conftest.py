import pickle

import numpy as np
import pytest
import scipy.sparse as sp


@pytest.fixture
def planetoid_cache(tmp_path):
    """Tiny fabricated shard set in the pickled citation-network layout.

    6 nodes: 0..3 carried by allx/ally (0,1 train-labeled), 4..5 are the
    test block. Node 5 has no label row mass (exercises the -1 path is not
    needed here; all rows get a class).
    """
    name = "toy"
    rng = np.random.default_rng(0)
    n_feat, n_class = 3, 2

    x = sp.csr_matrix(rng.random((2, n_feat)))  # labeled training nodes
    y = np.eye(n_class)[[0, 1]]
    allx = sp.csr_matrix(rng.random((4, n_feat)))  # nodes 0..3
    ally = np.eye(n_class)[[0, 1, 0, 1]]
    tx = sp.csr_matrix(rng.random((2, n_feat)))  # test nodes 4..5
    ty = np.eye(n_class)[[1, 0]]
    graph = {0: [1, 4], 1: [0, 2], 2: [1], 3: [3], 4: [0, 5], 5: [4]}
    test_index = np.array([5, 4])  # deliberately unsorted

    def dump(part, obj):
        with open(tmp_path / f"ind.{name}.{part}", "wb") as fh:
            pickle.dump(obj, fh)

    dump("x", x); dump("y", y)
    dump("tx", tx); dump("ty", ty)
    dump("allx", allx); dump("ally", ally)
    dump("graph", graph)
    np.savetxt(tmp_path / f"ind.{name}.test.index", test_index, fmt="%d")
    return tmp_path, name


@pytest.fixture
def geomgcn_cache(tmp_path):
    """Tiny fabricated page-network files plus a split npz."""
    name = "webtoy"
    nodes = ["node_id\tfeature\tlabel"]
    feats = [[1, 0], [0, 1], [1, 1], [0, 0]]
    labels = [0, 1, 1, 0]
    for i in (2, 0, 3, 1):  # scrambled id order in the file
        nodes.append(f"{i}\t{','.join(str(v) for v in feats[i])}\t{labels[i]}")
    (tmp_path / f"{name}_node_feature_label.txt").write_text("\n".join(nodes) + "\n")
    edges = ["node_id\tnode_id", "0\t1", "1\t0", "1\t2", "2\t3", "3\t3"]
    (tmp_path / f"{name}_graph_edges.txt").write_text("\n".join(edges) + "\n")
    np.savez(tmp_path / f"{name}_split_0.npz",
             train_mask=np.array([1, 1, 0, 0], dtype=bool),
             val_mask=np.array([0, 0, 1, 0], dtype=bool),
             test_mask=np.array([0, 0, 0, 1], dtype=bool))
    return tmp_path, name


@pytest.fixture
def coauthor_npz(tmp_path):
    """Tiny CSR-packed npz in the benchmark layout."""
    adj = sp.csr_matrix(np.array([
        [0, 1, 0, 0],
        [1, 0, 1, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 0],
    ], dtype=float))
    attr = sp.csr_matrix(np.arange(8, dtype=float).reshape(4, 2))
    path = tmp_path / "ms_academic_cs.npz"
    np.savez(path,
             adj_data=adj.data, adj_indices=adj.indices,
             adj_indptr=adj.indptr, adj_shape=np.array(adj.shape),
             attr_data=attr.data, attr_indices=attr.indices,
             attr_indptr=attr.indptr, attr_shape=np.array(attr.shape),
             labels=np.array([0, 1, 2, 0]))
    return path
