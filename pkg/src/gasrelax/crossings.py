"""High/low kinetic-energy states, their crossings, hitting times and dephasing.

A molecule is in state F when ``V**2 > V_0**2`` (net kinetic-energy gain) and
in D otherwise; the boundary belongs to D.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .chain import iter_chain_chunks, propagate
from .model import GasParams, equilibrium_spec
from .ou import binomial_interval
from .streams import DEFAULT_BLOCK_SIZE, as_generator, map_blocks
from .timeproc import time_ensemble


class StateLabel(str, enum.Enum):
    F = "F"
    D = "D"


def classify_state(v: float, v0: float) -> StateLabel:
    return StateLabel.D if v * v <= v0 * v0 else StateLabel.F


def in_f(v, v0):
    """Vectorised F indicator."""
    v = np.asarray(v)
    v0 = np.asarray(v0)
    return v * v > v0 * v0


def crossing_number(labels) -> np.ndarray:
    """Running count ``C_1..C_n`` of label changes; ``labels[0]`` must be D."""
    lab = np.asarray([StateLabel(x) == StateLabel.F if not isinstance(x, (bool, np.bool_)) else bool(x)
                      for x in labels], dtype=bool)
    if len(lab) == 0 or lab[0]:
        raise ValueError("label sequence must start in D")
    return np.cumsum(lab[1:] != lab[:-1])


# ---------------------------------------------------------------- crossing frequency


@dataclass
class CrossingCurve:
    n: np.ndarray
    mean_w: np.ndarray
    se: np.ndarray
    trials: int

    def isotonic_violation(self, level: float = 0.95) -> float:
        return isotonic_violation(self.mean_w, self.se, level)


def isotonic_violation(mean, se, level: float = 0.95) -> float:
    """Largest drop ``lo_i - hi_j`` over ``i < j`` between Bonferroni bands.

    Bands are simultaneous at ``level`` over all points; a value ``<= 0``
    means no decrease is resolved by the data.
    """
    mean = np.asarray(mean, dtype=float)
    se = np.asarray(se, dtype=float)
    z = stats.norm.isf((1.0 - level) / (2.0 * len(mean)))
    lo = mean - z * se
    hi = mean + z * se
    best_lo = np.maximum.accumulate(lo)[:-1]
    return float(np.max(best_lo - hi[1:])) if len(mean) > 1 else -math.inf


def _crossing_sums(p: GasParams, n_max: int, rng, size: int):
    s1 = np.zeros(n_max)
    s2 = np.zeros(n_max)
    count = np.zeros(size, dtype=np.int64)
    label = np.zeros(size, dtype=bool)
    v0sq = None
    for v0, start, block in iter_chain_chunks(p, rng, size, n_max):
        if start == 0:
            v0sq = v0 * v0
            continue
        lab = block * block > v0sq[:, None]
        prev = np.concatenate([label[:, None], lab[:, :-1]], axis=1)
        cum = count[:, None] + np.cumsum(lab != prev, axis=1)
        w = cum / np.arange(start, start + block.shape[1])
        s1[start - 1 : start - 1 + block.shape[1]] = w.sum(axis=0)
        s2[start - 1 : start - 1 + block.shape[1]] = (w * w).sum(axis=0)
        count = cum[:, -1]
        label = lab[:, -1]
    return s1, s2


def crossing_frequency_curve(
    p: GasParams,
    n_max: int,
    trials: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    tag: str = "crossings",
) -> CrossingCurve:
    """Monte Carlo ``E(W_n)``, ``W_n = C_n / n``, for ``n = 1..n_max``."""
    parts = map_blocks(lambda rng, size: _crossing_sums(p, n_max, rng, size), trials, seed, tag, block_size, workers)
    s1 = sum(a for a, _ in parts)
    s2 = sum(b for _, b in parts)
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean**2, 0.0) * trials / (trials - 1)
    return CrossingCurve(np.arange(1, n_max + 1), mean, np.sqrt(var / trials), trials)


@dataclass
class TimeCrossingCurve:
    times: np.ndarray
    mean_w: np.ndarray  # nan where every trial had N(t) = 0
    se: np.ndarray
    n_used: np.ndarray
    zero_fraction: np.ndarray


def time_crossing_frequency(p, times, trials, seed, block_size=DEFAULT_BLOCK_SIZE, workers=1, tag="time-crossings"):
    """``E(W(t))`` with ``W(t) = C_{N(t)} / N(t)`` over trials with ``N(t) >= 1``."""
    s = time_ensemble(p, times, trials, seed, block_size, workers, tag)
    used = s.n_jumps > 0
    n_used = used.sum(axis=0)
    w = np.where(used, s.crossings / np.maximum(s.n_jumps, 1), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = w.sum(axis=0) / n_used
        var = (np.where(used, w * w, 0.0).sum(axis=0) / n_used - mean**2) * n_used / (n_used - 1)
        se = np.sqrt(np.maximum(var, 0.0) / n_used)
    mean = np.where(n_used > 0, mean, np.nan)
    se = np.where(n_used > 1, se, np.nan)
    return TimeCrossingCurve(s.times, mean, se, n_used, (trials - n_used) / trials)


# ---------------------------------------------------------------- recurrence


@dataclass
class RecurrenceResult:
    n_max: np.ndarray
    k: int
    fraction: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    trials: int


def _crossings_at(p, checkpoints, rng, size):
    n_max = int(checkpoints[-1])
    out = np.zeros((size, len(checkpoints)), dtype=np.int64)
    count = np.zeros(size, dtype=np.int64)
    label = np.zeros(size, dtype=bool)
    v0sq = None
    for v0, start, block in iter_chain_chunks(p, rng, size, n_max):
        if start == 0:
            v0sq = v0 * v0
            continue
        lab = block * block > v0sq[:, None]
        prev = np.concatenate([label[:, None], lab[:, :-1]], axis=1)
        cum = count[:, None] + np.cumsum(lab != prev, axis=1)
        stop = start + block.shape[1]
        sel = (checkpoints >= start) & (checkpoints < stop)
        out[:, sel] = cum[:, checkpoints[sel] - start]
        count = cum[:, -1]
        label = lab[:, -1]
    return out


def recurrence_evidence(p, n_max, k, trials, seed, block_size=DEFAULT_BLOCK_SIZE, workers=1, tag="recurrence"):
    """Fraction of trajectories with at least ``k`` crossings by each ``n_max``.

    ``n_max`` may be a single count or a sequence; the same trajectories are
    reused for every checkpoint so the fractions are nested.
    """
    checkpoints = np.atleast_1d(np.asarray(n_max, dtype=np.int64))
    if np.any(np.diff(checkpoints) <= 0) or checkpoints[0] < 1:
        raise ValueError("n_max values must be positive and increasing")
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        ones = np.ones(len(checkpoints))
        lo = np.array([binomial_interval(trials, trials)[0]] * len(checkpoints))
        return RecurrenceResult(checkpoints, 0, ones, lo, ones, trials)
    counts = np.vstack(map_blocks(lambda rng, size: _crossings_at(p, checkpoints, rng, size),
                                  trials, seed, tag, block_size, workers))
    hits = (counts >= k).sum(axis=0)
    ci = [binomial_interval(h, trials) for h in hits]
    return RecurrenceResult(checkpoints, k, hits / trials,
                            np.array([a for a, _ in ci]), np.array([b for _, b in ci]), trials)


def _escape_probability(v0, sigmax):
    """``P(|X| > |v0|)`` for ``X ~ N(0, sigmax**2)``."""
    return 2.0 * stats.norm.sf(np.abs(v0) / sigmax)


def no_crossing_probability_memoryless(n: int, sigma0: float, sigmax: float) -> float:
    """``P(C_n = 0)`` when ``c = 0``: given ``V_0`` the velocities are i.i.d.

    Integrates ``(1 - P(|X| > |v0|))**n`` against the law of ``V_0``.
    """
    def integrand(z):
        return (1.0 - _escape_probability(sigma0 * z, sigmax)) ** n * stats.norm.pdf(z)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


def capped_hitting_mean_memoryless(cap: int, sigma0: float, sigmax: float) -> float:
    """``E(min(N_1, cap))`` when ``c = 0``.

    Given ``V_0`` the hitting index is geometric with success probability
    ``p = P(|X| > |V_0|)`` and ``E(min(N, cap)) = (1 - (1 - p)**cap) / p``.
    """
    def integrand(z):
        q = _escape_probability(sigma0 * z, sigmax)
        if q <= 0.0:
            return cap * stats.norm.pdf(z)
        return -math.expm1(cap * math.log1p(-q)) / q * stats.norm.pdf(z) if q < 1 else stats.norm.pdf(z)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-10, epsrel=1e-10, limit=400)
    return float(val)


# ---------------------------------------------------------------- hitting times


@dataclass
class HittingResult:
    """Per-trial first F entry ``N_1`` and time ``tau_1``, both censored at ``n_cap``.

    A censored trial reports ``n1 = n_cap`` and the time of its ``n_cap``-th
    collision.
    """

    params: GasParams
    n_cap: int
    n1: np.ndarray
    tau1: np.ndarray
    censored: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.n1)

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    @property
    def capped_mean_n1(self) -> float:
        return float(self.n1.mean())

    @property
    def capped_mean_tau1(self) -> float:
        return float(self.tau1.mean())

    @property
    def se_tau1(self) -> float:
        return float(self.tau1.std(ddof=1) / math.sqrt(self.trials))

    @property
    def se_n1(self) -> float:
        return float(self.n1.std(ddof=1) / math.sqrt(self.trials))

    @property
    def wald_ratio(self) -> float:
        """``lam * mean(tau_1) / mean(N_1)``; 1 under Wald's identity."""
        return self.params.lam * self.capped_mean_tau1 / self.capped_mean_n1

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "n_cap": self.n_cap,
            "censored_fraction": self.censored_fraction,
            "median_n1": float(np.median(self.n1)),
            "median_tau1": float(np.median(self.tau1)),
            "capped_mean_n1": self.capped_mean_n1,
            "se_n1": self.se_n1,
            "capped_mean_tau1": self.capped_mean_tau1,
            "se_tau1": self.se_tau1,
            "wald_ratio": self.wald_ratio,
            "tau1_lower_bound": tau1_lower_bound(self.params),
        }


def _hitting_block(p: GasParams, n_cap: int, rng, size: int):
    c = p.c
    v0 = p.sigma0 * rng.standard_normal(size)
    v0sq = v0 * v0
    n1 = np.full(size, n_cap, dtype=np.int64)
    censored = np.ones(size, dtype=bool)
    idx = np.arange(size)
    v = v0.copy()
    done = 0
    chunk = 16
    while done < n_cap and len(idx):
        k = min(chunk, n_cap - done)
        x = p.sigmax * rng.standard_normal((len(idx), k))
        path = propagate(v, x, c)
        hit = path * path > v0sq[idx, None]
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        n1[idx[any_hit]] = done + first[any_hit] + 1
        censored[idx[any_hit]] = False
        keep = ~any_hit
        idx = idx[keep]
        v = path[keep, -1]
        done += k
        chunk = min(chunk * 2, 1024)
    tau1 = rng.standard_gamma(n1.astype(float)) / p.lam
    return n1, tau1, censored


def hitting_time_stats(
    p: GasParams,
    n_cap: int,
    trials: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    tag: str = "hitting",
) -> HittingResult:
    """First entry into F for ``trials`` independent molecules.

    ``tau_1`` is the sum of ``N_1`` independent Exp(``lam``) gaps, drawn as one
    Gamma(``N_1``, ``1/lam``) variate per trial.
    """
    if n_cap < 1:
        raise ValueError("n_cap must be >= 1")
    parts = map_blocks(lambda rng, size: _hitting_block(p, n_cap, rng, size), trials, seed, tag, block_size, workers)
    return HittingResult(
        p,
        n_cap,
        np.concatenate([a for a, _, _ in parts]),
        np.concatenate([b for _, b, _ in parts]),
        np.concatenate([c for _, _, c in parts]),
    )


def tau1_lower_bound(p: GasParams) -> float:
    """Lower bound ``sigma0_sq / (lam * sigmax_sq) * (1 - c**2)`` on the mean first F time."""
    return p.sigma0_sq / (p.lam * p.sigmax_sq) * (1.0 - p.c**2)


@dataclass
class TemperatureRow:
    ratio: float
    lam: float
    bound: float
    mean_tau1: float
    ci_lo: float
    ci_hi: float
    censored_fraction: float


def temperature_scaling_experiment(
    ratios,
    base: GasParams,
    mode: str = "fixed",
    n_cap: int = 10_000,
    trials: int = 10_000,
    seed: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
) -> list[TemperatureRow]:
    """Bound and censored mean ``tau_1`` as the initial temperature ratio varies.

    ``sigma0_sq = ratio * sigmax_sq``.  In ``mode="fixed"`` the collision rate
    is ``base.lam``; in ``mode="inverse"`` it is ``base.lam / ratio``, the rate
    of a hot molecule crossing an effectively stationary bath.
    """
    if mode not in ("fixed", "inverse"):
        raise ValueError("mode must be 'fixed' or 'inverse'")
    rows = []
    for i, ratio in enumerate(ratios):
        lam = base.lam if mode == "fixed" else base.lam / ratio
        p = GasParams(base.m_p, base.m_q, ratio * base.sigmax_sq, base.sigmax_sq, lam)
        bound = tau1_lower_bound(p)
        if trials > 0:
            h = hitting_time_stats(p, n_cap, trials, seed, block_size, workers, tag=f"temperature:{i}")
            z = stats.norm.isf(0.025)
            m, se = h.capped_mean_tau1, h.se_tau1
            rows.append(TemperatureRow(ratio, lam, bound, m, m - z * se, m + z * se, h.censored_fraction))
        else:
            rows.append(TemperatureRow(ratio, lam, bound, math.nan, math.nan, math.nan, math.nan))
    return rows


# ---------------------------------------------------------------- dephasing


@dataclass
class DephasingSummary:
    """Ensemble-averaged kinetic energy ``(m_p / 2) * mean(V(t)**2)``."""

    ensemble_size: int
    times: np.ndarray
    mean_ke: np.ndarray
    se: np.ndarray
    equilibrium_ke: float
    state_traces: np.ndarray | None = field(default=None, repr=False)  # (traces, times), True = F

    @property
    def equilibration_residual(self) -> np.ndarray:
        return np.abs(self.mean_ke - self.equilibrium_ke)

    def tail_fluctuation(self, tail_start: float) -> float:
        """Relative fluctuation std/mean of the trace for ``t >= tail_start``."""
        tail = self.mean_ke[self.times >= tail_start]
        return float(tail.std(ddof=1) / tail.mean())


def dephasing_ensemble(
    p: GasParams,
    M: int,
    horizon: float,
    dt_sample: float,
    seed: int,
    n_state_traces: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
    tag: str = "dephasing",
) -> DephasingSummary:
    if M < 1:
        raise ValueError("ensemble size must be >= 1")
    times = np.arange(0.0, horizon + 0.5 * dt_sample, dt_sample)
    s = time_ensemble(p, times, M, seed, block_size, workers, tag)
    ke = 0.5 * p.m_p * s.v**2
    mean = ke.mean(axis=0)
    se = ke.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.full(len(times), np.nan)
    traces = in_f(s.v[:n_state_traces], s.v0[:n_state_traces, None]) if n_state_traces else None
    eq = 0.5 * p.m_p * equilibrium_spec(p).variance
    return DephasingSummary(M, times, mean, se, eq, traces)


def fit_decay_rate(summary: DephasingSummary) -> tuple[float, float]:
    """Least-squares decay rate ``k`` of ``mean_ke - equilibrium_ke``.

    Given the sampled initial velocities the expected residual is exactly
    ``y(0) * exp(-k t)``, so the amplitude is pinned to the observed ``y(0)``
    and only ``k`` is fitted.  Returns ``(k, standard error of k)``; the error
    ignores the time correlation of the trace and is optimistic.
    """
    t = summary.times
    y = summary.mean_ke - summary.equilibrium_ke
    y0 = y[0]
    guess_k = 4.0 / max(t[-1], 1e-12)
    popt, pcov = optimize.curve_fit(lambda tt, k: y0 * np.exp(-k * tt), t, y, p0=(guess_k,), maxfev=10_000)
    return float(popt[0]), float(math.sqrt(pcov[0, 0]))


# ---------------------------------------------------------------- Kubo oscillator


def kubo_trace(omega0: float, sigma_w: float, horizon: float, dt: float, stream, n_traces: int = 2):
    """``y = sin(phi)`` with ``phi' = omega0 + sigma_w * W(t)`` for independent Wiener paths.

    The modulation is accumulated by a left-point Euler sum; the mean
    rotation ``omega0 * t`` is added exactly.  Returns ``(t, y)`` with ``y`` of
    shape ``(n_traces, len(t))``.
    """
    rng = as_generator(stream)
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    phase = omega0 * t + sigma_w * _integrated_wiener(rng, n_traces, n, dt)
    return t, np.sin(phase)


def _integrated_wiener(rng, n_paths, n_steps, dt):
    """Left-point sums ``sum_{j<i} W(t_j) dt``, shape ``(n_paths, n_steps + 1)``."""
    dw = math.sqrt(dt) * rng.standard_normal((n_paths, n_steps))
    w = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dw, axis=1)], axis=1)
    return np.concatenate([np.zeros((n_paths, 1)), np.cumsum(w[:, :-1], axis=1) * dt], axis=1)


def kubo_envelope_exact(sigma_w: float, t):
    """``E cos(sigma_w * int_0^t W ds) = exp(-sigma_w**2 t**3 / 6)``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-(sigma_w**2) * t**3 / 6.0)


def kubo_envelope(sigma_w, times, n_paths, dt, seed, omega0=0.0, block_size=DEFAULT_BLOCK_SIZE, workers=1):
    """Monte Carlo mean and standard error of ``cos(phi(t))`` at ``times``."""
    times = np.asarray(times, dtype=float)
    n = int(round(times.max() / dt))
    idx = np.rint(times / dt).astype(int)

    def block(rng, size):
        phase = omega0 * idx * dt + sigma_w * _integrated_wiener(rng, size, n, dt)[:, idx]
        cphi = np.cos(phase)
        return cphi.sum(axis=0), (cphi**2).sum(axis=0)

    parts = map_blocks(block, n_paths, seed, "kubo-envelope", block_size, workers)
    s1 = sum(a for a, _ in parts)
    s2 = sum(b for _, b in parts)
    mean = s1 / n_paths
    var = (s2 / n_paths - mean**2) * n_paths / (n_paths - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / n_paths)
