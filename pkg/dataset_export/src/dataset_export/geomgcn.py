"""Parser for the WebKB and Wikipedia page networks (Cornell, Texas,
Chameleon, Squirrel) in the widely mirrored text distribution with
accompanying ten-fold split files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

GEOMGCN_BASE = ("https://raw.githubusercontent.com/graphdml-uiuc-jlu/"
                "geom-gcn/master")


def file_names(name: str, split_index: int = 0):
    return {
        "nodes": (f"{GEOMGCN_BASE}/new_data/{name}/out1_node_feature_label.txt",
                  f"{name}_node_feature_label.txt"),
        "edges": (f"{GEOMGCN_BASE}/new_data/{name}/out1_graph_edges.txt",
                  f"{name}_graph_edges.txt"),
        "split": (f"{GEOMGCN_BASE}/splits/{name}_split_0.6_0.2_0.2_{split_index}.npz",
                  f"{name}_split_{split_index}.npz"),
    }


def parse(name: str, cache_dir, split_index: int = 0) -> dict:
    cache = Path(cache_dir)
    node_lines = (cache / f"{name}_node_feature_label.txt").read_text().splitlines()
    header, rows = node_lines[0], node_lines[1:]
    if "feature" not in header:
        raise ValueError(f"unexpected node file header: {header!r}")

    ids, feats, labels = [], [], []
    for line in rows:
        if not line.strip():
            continue
        node_id, feat_str, label = line.split("\t")
        ids.append(int(node_id))
        feats.append([float(x) for x in feat_str.split(",")])
        labels.append(int(label))
    order = np.argsort(ids)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise ValueError(f"{name}: node ids are not a contiguous range")
    features = np.asarray(feats, dtype=np.float64)[order]
    labels = np.asarray(labels, dtype=np.int64)[order]

    arcs = []
    edge_lines = (cache / f"{name}_graph_edges.txt").read_text().splitlines()
    for line in edge_lines[1:]:  # first line is a header
        if not line.strip():
            continue
        u, v = line.split("\t")
        arcs.append((int(u), int(v)))

    with np.load(cache / f"{name}_split_{split_index}.npz") as npz:
        splits = {
            "train": [int(i) for i in np.flatnonzero(npz["train_mask"])],
            "val": [int(i) for i in np.flatnonzero(npz["val_mask"])],
            "test": [int(i) for i in np.flatnonzero(npz["test_mask"])],
        }

    return {
        "features": features,
        "arcs": arcs,
        "labels": labels,
        "n_classes": int(labels.max()) + 1,
        "splits": splits,
        "split_source": f"geom-gcn-fold-{split_index}",
    }
