"""Export orchestration: download, parse, deduplicate, write, verify."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import container, fetch, geomgcn, npz_dataset, planetoid

log = logging.getLogger(__name__)

PLANETOID_NAMES = ("cora", "citeseer", "pubmed")
GEOMGCN_NAMES = ("cornell", "texas", "chameleon", "squirrel")
NPZ_NAMES = ("coauthor-cs",)
SUPPORTED = PLANETOID_NAMES + GEOMGCN_NAMES + NPZ_NAMES


class UnknownDatasetError(ValueError):
    def __init__(self, name):
        super().__init__(
            f"unknown dataset {name!r}; supported: {', '.join(SUPPORTED)}")


@dataclass
class ExportManifest:
    dataset: str
    n_nodes: int
    n_features: int
    n_classes: int
    n_edges: int  # deduplicated unordered pairs
    raw_arc_count: int  # directed arcs before deduplication
    self_loops_dropped: int
    split_sizes: dict
    split_source: str
    checksums: dict = field(default_factory=dict)

    def write(self, out_dir) -> None:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), sort_keys=True, indent=2) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _download(name: str, cache_dir) -> None:
    if name in PLANETOID_NAMES:
        for fname in planetoid.file_names(name):
            fetch.fetch(f"{planetoid.PLANETOID_BASE}/{fname}", cache_dir)
    elif name in GEOMGCN_NAMES:
        for url, fname in geomgcn.file_names(name).values():
            fetch.fetch(url, cache_dir, filename=fname)
    elif name in NPZ_NAMES:
        fetch.fetch(npz_dataset.COAUTHOR_CS_URL, cache_dir)


def _parse(name: str, cache_dir) -> dict:
    if name in PLANETOID_NAMES:
        return planetoid.parse(name, cache_dir)
    if name in GEOMGCN_NAMES:
        return geomgcn.parse(name, cache_dir)
    if name in NPZ_NAMES:
        return npz_dataset.parse(Path(cache_dir) / "ms_academic_cs.npz")
    raise UnknownDatasetError(name)


def export_parsed(name: str, parsed: dict, out_dir) -> ExportManifest:
    """Deduplicate, write the container, verify, and emit the manifest."""
    raw_arcs = parsed["arcs"]
    self_loops = sum(1 for u, v in raw_arcs if u == v)
    pairs = {(min(u, v), max(u, v)) for u, v in raw_arcs if u != v}

    files = container.write_container(
        out_dir, features=parsed["features"], edges=sorted(pairs),
        labels=parsed["labels"], splits=parsed["splits"],
        n_classes=parsed["n_classes"])

    observed = container.validate_container(out_dir)
    manifest = ExportManifest(
        dataset=name,
        n_nodes=observed["n_nodes"],
        n_features=observed["n_features"],
        n_classes=observed["n_classes"],
        n_edges=observed["n_edges"],
        raw_arc_count=len(raw_arcs),
        self_loops_dropped=self_loops,
        split_sizes=observed["split_sizes"],
        split_source=parsed["split_source"],
        checksums={f: _sha256(Path(out_dir) / f) for f in files},
    )
    if manifest.n_edges != len(pairs):
        raise container.ContainerError("edge count drifted between write and read")
    manifest.write(out_dir)
    log.info("%s: %d nodes, %d pairs (%d raw arcs), splits %s", name,
             manifest.n_nodes, manifest.n_edges, manifest.raw_arc_count,
             manifest.split_sizes)
    return manifest


def export_dataset(name: str, out_dir, cache_dir=None) -> ExportManifest:
    """Download (or reuse cached) raw files and write the container."""
    name = name.lower()
    if name not in SUPPORTED:
        raise UnknownDatasetError(name)
    cache = Path(cache_dir) if cache_dir else Path(out_dir).parent / "_cache" / name
    _download(name, cache)
    return export_parsed(name, _parse(name, cache), out_dir)
