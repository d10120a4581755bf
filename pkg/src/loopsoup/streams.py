"""Counter-addressed random streams.

A stream is keyed by (seed, tag, chunk index), so work split across any
number of processes draws exactly the same numbers as a serial run.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 10_000


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode())


def stream(seed: int, tag: str, chunk: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), tag_key(tag), int(chunk)])))


def chunk_sizes(reps: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(reps), chunk)
    return [chunk] * full + ([rest] if rest else [])


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LOOPSOUP_THREADS", "1")))
    except ValueError:
        return 1


def map_chunks(fn: Callable, seed: int, tag: str, reps: int, chunk: int = CHUNK, args: Sequence = ()) -> list:
    """Call fn(size, rng, *args) per chunk; results come back in chunk order."""
    jobs = [(fn, n, seed, tag, i, tuple(args)) for i, n in enumerate(chunk_sizes(reps, chunk))]
    workers = worker_count()
    if workers == 1 or len(jobs) == 1:
        return [_run(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))


def _run(job):
    fn, n, seed, tag, index, args = job
    return fn(n, stream(seed, tag, index), *args)
