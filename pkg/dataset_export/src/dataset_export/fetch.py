"""Cached downloads from the upstream dataset hosts."""

from __future__ import annotations

import logging
import urllib.request
from pathlib import Path

log = logging.getLogger(__name__)

USER_AGENT = "dataset-export/0.1"


class DownloadError(RuntimeError):
    pass


def fetch(url: str, cache_dir, filename: str | None = None) -> Path:
    """Return a local path for ``url``, downloading into the cache on a miss.

    Pre-populating the cache directory makes the exporter fully offline.
    """
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / (filename or url.rsplit("/", 1)[-1])
    if target.is_file():
        log.debug("cache hit: %s", target)
        return target
    log.info("downloading %s", url)
    request = urllib.request.Request(url, headers={"User-Agent": USER_AGENT})
    try:
        with urllib.request.urlopen(request, timeout=60) as resp:
            data = resp.read()
    except OSError as e:
        raise DownloadError(f"failed to download {url}: {e}") from e
    tmp = target.with_suffix(target.suffix + ".part")
    tmp.write_bytes(data)
    tmp.rename(target)
    return target
