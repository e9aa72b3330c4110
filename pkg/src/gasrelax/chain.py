"""Collision-indexed velocity chain ``V_n = c V_{n-1} + X_n``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .model import GasParams, ModelError, chain_variance
from .streams import DEFAULT_BLOCK_SIZE, StreamId, as_generator, map_blocks

# Impulses are drawn in column chunks of this width; part of the stream layout.
CHUNK = 256


def step_collision(v_prev, x, c):
    """Post-collision velocity of a P molecule hit by a Q molecule of velocity ``x``."""
    return c * v_prev + x


def propagate(v_start, impulses, c):
    """Apply ``step_collision`` along the last axis of ``impulses``.

    ``v_start`` has shape ``impulses.shape[:-1]``.  Equivalent, up to round-off, to
    repeated ``c * v + x``.
    """
    impulses = np.asarray(impulses, dtype=float)
    v_start = np.asarray(v_start, dtype=float)
    if impulses.shape[-1] == 0:
        return impulses.copy()
    zi = (c * v_start)[..., None]
    out, _ = signal.lfilter([1.0], [1.0, -c], impulses, axis=-1, zi=zi)
    return out


@dataclass
class CollisionTrajectory:
    """One realisation ``V_0, V_1, ..., V_n`` of the chain.

    Impulses are kept only when requested; otherwise they are recovered by
    replaying ``stream``.
    """

    v0: float
    velocities: np.ndarray
    params: GasParams
    stream: StreamId | None = None
    impulses: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.velocities)

    @property
    def path(self) -> np.ndarray:
        return np.concatenate([[self.v0], self.velocities])

    def replay_impulses(self) -> np.ndarray:
        if self.impulses is not None:
            return self.impulses
        if self.stream is None:
            raise ValueError("trajectory was drawn from an anonymous generator; cannot replay")
        _, x = _draw(self.params, self.n, self.stream.generator())
        return x


def _draw(p: GasParams, n: int, rng: np.random.Generator):
    v0 = p.sigma0 * rng.standard_normal()
    x = p.sigmax * rng.standard_normal(n)
    return v0, x


def simulate_chain(p: GasParams, n: int, stream, record_impulses: bool = False) -> CollisionTrajectory:
    """Simulate ``n`` collisions from ``V_0 ~ N(0, sigma0_sq)``.

    ``stream`` may be a ``StreamId`` (replayable), a ``Generator`` or an int seed.
    """
    if n < 0:
        raise ModelError("collision count must be non-negative")
    sid = stream if isinstance(stream, StreamId) else None
    v0, x = _draw(p, n, as_generator(stream))
    velocities = propagate(v0, x, p.c)
    return CollisionTrajectory(float(v0), velocities, p, sid, x if record_impulses else None)


def iter_chain_chunks(p: GasParams, rng: np.random.Generator, size: int, n_max: int, chunk: int = CHUNK):
    """Yield ``(v0, start, block)`` where ``block[:, j]`` is ``V_{start + j}``.

    ``start`` runs from 1; memory stays at ``size * chunk`` per step.
    """
    v0 = p.sigma0 * rng.standard_normal(size)
    yield v0, 0, v0[:, None]
    v = v0
    start = 1
    while start <= n_max:
        k = min(chunk, n_max - start + 1)
        x = p.sigmax * rng.standard_normal((size, k))
        block = propagate(v, x, p.c)
        yield v0, start, block
        v = block[:, -1]
        start += k


def chain_ensemble(
    p: GasParams,
    n: int,
    trials: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    tag: str = "chain",
) -> np.ndarray:
    """Independent chains as an array of shape ``(trials, n + 1)``."""

    def one_block(rng, size):
        return np.hstack([b for _, _, b in iter_chain_chunks(p, rng, size, n)])

    return np.vstack(map_blocks(one_block, trials, seed, tag, block_size, workers))


def chain_endpoints(p, ns, trials, seed, block_size=DEFAULT_BLOCK_SIZE, workers=1, tag="chain"):
    """Samples of ``V_n`` for each ``n`` in ``ns``; shape ``(trials, len(ns))``."""
    ns = np.asarray(sorted(ns), dtype=int)

    def one_block(rng, size):
        out = np.empty((size, len(ns)))
        for _, start, b in iter_chain_chunks(p, rng, size, int(ns[-1])):
            sel = (ns >= start) & (ns < start + b.shape[1])
            out[:, sel] = b[:, ns[sel] - start]
        return out

    return np.vstack(map_blocks(one_block, trials, seed, tag, block_size, workers))


def marginal_density_chain(v, n, p: GasParams):
    return stats.norm.pdf(v, scale=np.sqrt(chain_variance(n, p)))


def variance_standard_error(samples) -> tuple[float, float]:
    """Sample variance and its standard error under a Gaussian model."""
    samples = np.asarray(samples, dtype=float)
    m = samples.size
    s2 = samples.var(ddof=1)
    return float(s2), float(s2 * np.sqrt(2.0 / (m - 1)))
