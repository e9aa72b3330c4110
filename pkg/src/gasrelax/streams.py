"""Reproducible random streams for parallel Monte Carlo.

Every stream is a Philox4x64 counter-based generator keyed by
``SeedSequence(master_seed, spawn_key=(tag, index))``.  Ensembles are cut into
fixed-size blocks and each block owns one stream, so results depend only on
the master seed and the block size, never on how blocks are scheduled.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

RNG_CONSTRUCTION = (
    "numpy Philox4x64 keyed by SeedSequence(seed, spawn_key=(crc32(tag), block)); "
    "normals via Generator.standard_normal (ziggurat), exponentials via "
    "Generator.standard_exponential (ziggurat)"
)

DEFAULT_BLOCK_SIZE = 1024


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class StreamId:
    """Identifies one private random stream; cheap to store and replay."""

    seed: int
    tag: str = "default"
    index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(tag_id(self.tag), self.index))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "StreamId":
        return StreamId(self.seed, self.tag, index)


def as_generator(stream) -> np.random.Generator:
    """Accept a ``StreamId``, a ``Generator`` or an int seed."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, StreamId):
        return stream.generator()
    return StreamId(int(stream)).generator()


def blocks(n_trials: int, block_size: int = DEFAULT_BLOCK_SIZE):
    """Split ``range(n_trials)`` into ``(block_index, start, stop)`` triples."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [
        (i, start, min(start + block_size, n_trials))
        for i, start in enumerate(range(0, n_trials, block_size))
    ]


def map_blocks(fn, n_trials, seed, tag, block_size=DEFAULT_BLOCK_SIZE, workers=1):
    """Run ``fn(rng, size)`` on every block and return results in block order.

    The results are identical for any ``workers`` value.
    """
    base = StreamId(int(seed), tag)
    jobs = [(base.child(i), stop - start) for i, start, stop in blocks(n_trials, block_size)]

    def run(job):
        sid, size = job
        return fn(sid.generator(), size)

    if workers <= 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))
