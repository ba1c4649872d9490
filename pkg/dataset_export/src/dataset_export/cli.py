"""Command line: dataset-export <name> --out DIR [--cache DIR]."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import SUPPORTED, UnknownDatasetError, export_dataset
from .fetch import DownloadError


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s",
                        stream=sys.stderr)
    parser = argparse.ArgumentParser(
        prog="dataset-export",
        description="Download a public graph benchmark and write it in the "
                    "neutral container format.")
    parser.add_argument("dataset", help=f"one of: {', '.join(SUPPORTED)}")
    parser.add_argument("--out", required=True, help="output container directory")
    parser.add_argument("--cache", default=None,
                        help="raw-file cache directory (pre-populate for offline use)")
    args = parser.parse_args(argv)
    try:
        manifest = export_dataset(args.dataset, args.out, cache_dir=args.cache)
    except UnknownDatasetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DownloadError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"{manifest.dataset}: {manifest.n_nodes} nodes, "
          f"{manifest.n_features} features, {manifest.n_classes} classes, "
          f"{manifest.n_edges} edges -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
