"""Small shared helpers: atomic file writes, bounded parallelism, seed derivation.

Parallel width is capped by the EIHF_THREADS environment variable
(unset or 0 means auto, 1 disables threading). Results always come back
in input order, so threaded and serial runs are bit-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VAR = "EIHF_THREADS"


def worker_count() -> int:
    """Number of worker threads to use for data-parallel loops."""
    raw = os.environ.get(THREADS_ENV_VAR, "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        n = 0
    if n == 0:
        n = os.cpu_count() or 1
    return n


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map fn over items, threaded when EIHF_THREADS allows, preserving order."""
    workers = min(worker_count(), len(items)) or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    """Derive n independent child seed sequences from one root seed."""
    return np.random.SeedSequence(seed).spawn(n)


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Seeded Philox generator; the library-wide RNG for all stochastic ops."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write payload to path via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_report(report: dict) -> str:
    """Canonical JSON serialization for reports: sorted keys, 2-space indent."""
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def format_value(v: float) -> str:
    """Shortest decimal string that round-trips the float exactly ('1.5', '-2')."""
    return np.format_float_positional(float(v), unique=True, trim="-")


def chunked(items: Iterable[T], size: int) -> Iterable[list[T]]:
    buf: list[T] = []
    for item in items:
        buf.append(item)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf
