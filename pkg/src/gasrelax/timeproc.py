"""Poisson-clocked velocity process ``V(t) = V_{N(t)}`` and its exact law."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .chain import propagate
from .model import GasParams, ModelError, chain_variance
from .streams import DEFAULT_BLOCK_SIZE, StreamId, as_generator, map_blocks

_BATCH = 64


@dataclass
class TimeTrajectory:
    """Jump times ``U_1 < U_2 < ... <= horizon`` and post-collision velocities.

    ``V(t)`` is right-continuous: ``v0`` on ``[0, U_1)`` and
    ``velocities[k]`` on ``[U_{k+1}, U_{k+2})`` (zero-based ``k``).
    """

    v0: float
    jump_times: np.ndarray
    velocities: np.ndarray
    horizon: float
    params: GasParams
    stream: StreamId | None = None

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def gaps(self) -> np.ndarray:
        return np.diff(self.jump_times, prepend=0.0)


def simulate_time_trajectory(p: GasParams, horizon: float, stream) -> TimeTrajectory:
    """Draw exponential gaps until the horizon is passed; the overshoot is dropped."""
    if not horizon > 0:
        raise ModelError("horizon must be positive")
    rng = as_generator(stream)
    v0 = p.sigma0 * rng.standard_normal()
    times, impulses = [], []
    clock = 0.0
    done = False
    while not done:
        gaps = rng.standard_exponential(_BATCH) / p.lam
        x = p.sigmax * rng.standard_normal(_BATCH)
        for g, xi in zip(gaps, x):
            clock += g
            if clock > horizon:
                done = True
                break
            times.append(clock)
            impulses.append(xi)
    velocities = propagate(v0, np.array(impulses), p.c)
    sid = stream if isinstance(stream, StreamId) else None
    return TimeTrajectory(float(v0), np.array(times), velocities, float(horizon), p, sid)


def evaluate_at(traj: TimeTrajectory, t):
    """Value of the piecewise-constant path at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > traj.horizon):
        raise ValueError(f"t must lie in [0, {traj.horizon}]")
    k = np.searchsorted(traj.jump_times, t_arr, side="right")
    path = np.concatenate([[traj.v0], traj.velocities])
    out = path[k]
    return float(out) if out.ndim == 0 else out


class TimeSamples(NamedTuple):
    """Ensemble snapshots at fixed times; arrays have shape ``(trials, len(times))``."""

    times: np.ndarray
    v0: np.ndarray
    v: np.ndarray
    n_jumps: np.ndarray
    crossings: np.ndarray


def _time_block(p: GasParams, times: np.ndarray, rng: np.random.Generator, size: int) -> TimeSamples:
    n_t = len(times)
    horizon = times[-1]
    c = p.c
    v0 = p.sigma0 * rng.standard_normal(size)
    v = v0.copy()
    v0sq = v0 * v0
    label = np.zeros(size, dtype=bool)  # False = D
    n = np.zeros(size, dtype=np.int64)
    cross = np.zeros(size, dtype=np.int64)
    t_next = rng.standard_exponential(size) / p.lam
    out_v = np.empty((size, n_t))
    out_n = np.empty((size, n_t), dtype=np.int64)
    out_c = np.empty((size, n_t), dtype=np.int64)
    pos = np.zeros(size, dtype=np.int64)
    rows = np.arange(size)

    while True:
        # record every sample time strictly before the next jump
        while True:
            m = pos < n_t
            m[m] = times[pos[m]] < t_next[m]
            if not m.any():
                break
            r, k = rows[m], pos[m]
            out_v[r, k] = v[m]
            out_n[r, k] = n[m]
            out_c[r, k] = cross[m]
            pos[m] += 1
        active = t_next <= horizon
        if not active.any():
            break
        x = p.sigmax * rng.standard_normal(size)
        gap = rng.standard_exponential(size) / p.lam
        v = np.where(active, c * v + x, v)
        new_label = v * v > v0sq
        cross += active & (new_label != label)
        label = np.where(active, new_label, label)
        n += active
        t_next = np.where(active, t_next + gap, t_next)
    return TimeSamples(times, v0, out_v, out_n, out_c)


def time_ensemble(
    p: GasParams,
    times,
    trials: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    tag: str = "time",
) -> TimeSamples:
    """Simulate ``trials`` independent paths and sample them at ``times``."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be a non-empty, non-decreasing sequence of non-negative values")
    parts = map_blocks(lambda rng, size: _time_block(p, times, rng, size), trials, seed, tag, block_size, workers)
    return TimeSamples(
        times,
        np.concatenate([s.v0 for s in parts]),
        np.vstack([s.v for s in parts]),
        np.vstack([s.n_jumps for s in parts]),
        np.vstack([s.crossings for s in parts]),
    )


@dataclass(frozen=True)
class MixtureDensity:
    """Exact law of ``V(t)``: Poisson-weighted Gaussians, truncated at ``truncation_n``."""

    params: GasParams
    t: float
    truncation_n: int
    tail_mass: float
    weights: np.ndarray
    variances: np.ndarray

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for w, var in zip(self.weights, self.variances):
            out += w * np.exp(-0.5 * v * v / var) / np.sqrt(2.0 * np.pi * var)
        return out

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for w, var in zip(self.weights, self.variances):
            out += w * stats.norm.cdf(v, scale=np.sqrt(var))
        return out

    @property
    def variance(self) -> float:
        return float(np.dot(self.weights, self.variances))


def poisson_truncation(mu: float, tol: float) -> tuple[int, float]:
    """Smallest ``n`` with ``P(N > n) < tol`` for ``N ~ Poisson(mu)``, and that tail."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    n_hi = int(mu + 40.0 * np.sqrt(mu) + 60)
    tails = stats.poisson.sf(np.arange(n_hi + 1), mu)
    n_star = int(np.argmax(tails < tol))
    return n_star, float(tails[n_star])


def mixture(t: float, p: GasParams, tol: float = 1e-12) -> MixtureDensity:
    if t < 0:
        raise ModelError("time must be non-negative")
    mu = p.lam * t
    if mu == 0:
        return MixtureDensity(p, t, 0, 0.0, np.array([1.0]), np.array([p.sigma0_sq]))
    n_star, tail = poisson_truncation(mu, tol)
    ns = np.arange(n_star + 1)
    weights = stats.poisson.pmf(ns, mu)
    return MixtureDensity(p, float(t), n_star, tail, weights, np.atleast_1d(chain_variance(ns, p)))


def mixture_density(v, t: float, p: GasParams, tol: float = 1e-12):
    """Density of ``V(t)`` at ``v`` with Poisson tail below ``tol``."""
    return mixture(t, p, tol)(v)
