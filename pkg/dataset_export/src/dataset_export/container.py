"""Writer and validator for the neutral graph container format.

Directory layout (the interface contract with the training engine):
  meta.json          {"n_nodes": N, "n_features": C, "n_classes": K}
  edges.tsv          one "u<TAB>v" per line, u < v, each unordered pair once
  features.tsv       one row per node, C tab-separated decimals
  labels.tsv         one integer per line, -1 = unlabeled
  split_train.tsv / split_val.tsv / split_test.tsv   one node id per line

All files newline-terminated with 0-based ids. This package deliberately
does not import the training engine; the file format is the only coupling.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SPLIT_NAMES = ("train", "val", "test")


class ContainerError(ValueError):
    pass


def write_container(out_dir, *, features: np.ndarray, edges, labels: np.ndarray,
                    splits: dict, n_classes: int) -> list:
    """Write one dataset; returns the list of files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_nodes, n_features = features.shape

    meta = {"n_nodes": int(n_nodes), "n_features": int(n_features),
            "n_classes": int(n_classes)}
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")

    pairs = sorted({(min(u, v), max(u, v)) for u, v in edges})
    with open(out / "edges.tsv", "w") as fh:
        for u, v in pairs:
            fh.write(f"{u}\t{v}\n")

    with open(out / "features.tsv", "w") as fh:
        for row in features:
            fh.write("\t".join("%.9g" % x for x in row) + "\n")

    with open(out / "labels.tsv", "w") as fh:
        for lab in labels:
            fh.write(f"{int(lab)}\n")

    for name in SPLIT_NAMES:
        with open(out / f"split_{name}.tsv", "w") as fh:
            for i in splits.get(name, ()):
                fh.write(f"{int(i)}\n")

    return ["meta.json", "edges.tsv", "features.tsv", "labels.tsv",
            "split_train.tsv", "split_val.tsv", "split_test.tsv"]


def validate_container(out_dir) -> dict:
    """Re-read a written container and enforce the format invariants.

    Returns the observed counts so callers can cross-check the manifest.
    """
    out = Path(out_dir)
    meta = json.loads((out / "meta.json").read_text())
    n_nodes = meta["n_nodes"]
    n_features = meta["n_features"]
    n_classes = meta["n_classes"]

    seen = set()
    for ln, line in enumerate((out / "edges.tsv").read_text().splitlines(), 1):
        u_s, v_s = line.split("\t")
        u, v = int(u_s), int(v_s)
        if u == v:
            raise ContainerError(f"edges.tsv line {ln}: self-loop {u}")
        if not u < v:
            raise ContainerError(f"edges.tsv line {ln}: expected u < v")
        if v >= n_nodes:
            raise ContainerError(f"edges.tsv line {ln}: endpoint out of range")
        if (u, v) in seen:
            raise ContainerError(f"edges.tsv line {ln}: duplicate pair")
        seen.add((u, v))

    feat_lines = (out / "features.tsv").read_text().splitlines()
    if len(feat_lines) != n_nodes:
        raise ContainerError("features.tsv row count != n_nodes")
    for i, line in enumerate(feat_lines):
        cols = line.split("\t")
        if len(cols) != n_features:
            raise ContainerError(f"features.tsv row {i}: wrong column count")
        for x in cols:
            float(x)

    labels = [int(x) for x in (out / "labels.tsv").read_text().splitlines()]
    if len(labels) != n_nodes:
        raise ContainerError("labels.tsv row count != n_nodes")
    if any(lab < -1 or lab >= n_classes for lab in labels):
        raise ContainerError("label out of range")

    split_sizes = {}
    used = set()
    for name in SPLIT_NAMES:
        ids = [int(x) for x in (out / f"split_{name}.tsv").read_text().splitlines()]
        if any(not 0 <= i < n_nodes for i in ids):
            raise ContainerError(f"split_{name}.tsv: id out of range")
        if used & set(ids):
            raise ContainerError("splits are not pairwise disjoint")
        used |= set(ids)
        split_sizes[name] = len(ids)

    return {"n_nodes": n_nodes, "n_features": n_features,
            "n_classes": n_classes, "n_edges": len(seen),
            "split_sizes": split_sizes}
