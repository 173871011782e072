"""Worker-count handling shared by the analysis modules.

Work is split into fixed-size chunks before being handed to a thread
pool, so the chunking (and therefore every per-chunk result) is the
same no matter how many workers LOGRISK_THREADS allows.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError

CHUNK = 512


def thread_count() -> int:
    """Worker cap from LOGRISK_THREADS; 0 or unset means auto."""
    raw = os.environ.get("LOGRISK_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LOGRISK_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ConfigError("LOGRISK_THREADS must not be negative")
    return n if n else (os.cpu_count() or 1)


def map_chunks(fn, items, threads=None):
    """Apply fn to fixed-size chunks of items and concatenate the results.

    fn takes a list slice and returns a list. Chunk boundaries are fixed
    by CHUNK alone, and results come back in input order.
    """
    items = list(items)
    if not items:
        return []
    chunks = [items[i:i + CHUNK] for i in range(0, len(items), CHUNK)]
    workers = thread_count() if threads is None else threads
    if workers <= 1 or len(chunks) == 1:
        parts = [fn(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            parts = list(pool.map(fn, chunks))
    out = []
    for part in parts:
        out.extend(part)
    return out
