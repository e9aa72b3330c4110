"""Heavy-particle limit: renormalised jump process versus an Ornstein-Uhlenbeck path."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chain import propagate
from .model import GasParams, ModelError, restitution_coefficient, time_variance
from .streams import StreamId, as_generator, map_blocks
from .timeproc import mixture


@dataclass(frozen=True)
class RenormalizedParams:
    """Family of jump processes with ``c_n = alpha**(1/lambda_n)``.

    Impulses at rate ``lambda_n`` have variance ``sigma_x0**2 / lambda_n``.
    """

    alpha: float
    lambda_n: tuple
    sigma_x0: float
    sigma0_sq: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ModelError(f"alpha must lie in (0, 1), got {self.alpha}")
        lam = tuple(float(x) for x in self.lambda_n)
        object.__setattr__(self, "lambda_n", lam)
        if any(x <= 0 for x in lam) or any(b <= a for a, b in zip(lam, lam[1:])):
            raise ModelError("lambda_n must be positive and strictly increasing")
        if self.sigma_x0 < 0 or self.sigma0_sq < 0:
            raise ModelError("sigma_x0 and sigma0_sq must be non-negative")

    def c_n(self, lam: float) -> float:
        return self.alpha ** (1.0 / lam)

    def impulse_variance(self, lam: float) -> float:
        return self.sigma_x0**2 / lam

    def gas_params(self, lam: float) -> GasParams:
        """Equivalent ``GasParams`` at rate ``lam`` (requires positive variances)."""
        return GasParams.from_restitution(self.c_n(lam), self.sigma0_sq, self.impulse_variance(lam), lam)


@dataclass(frozen=True)
class OUParams:
    theta: float
    eta: float

    def __post_init__(self):
        if not (self.theta > 0 and self.eta >= 0):
            raise ModelError("theta must be positive and eta non-negative")

    @property
    def stationary_variance(self) -> float:
        return self.eta**2 / (2.0 * self.theta)

    def variance(self, t, sigma0_sq: float):
        """Variance of ``Y(t)`` started from ``N(0, sigma0_sq)``."""
        decay = np.exp(-2.0 * self.theta * np.asarray(t, dtype=float))
        return sigma0_sq * decay + self.stationary_variance * (1.0 - decay)


def derive_ou_params(r: RenormalizedParams) -> OUParams:
    return OUParams(-math.log(r.alpha), r.sigma_x0)


def friction_interpretation(m_p: float, m_q: float, lam: float) -> float:
    """Friction coefficient ``-lam * ln c`` read off from the collision model."""
    c = restitution_coefficient(m_p, m_q)
    if c == 0:
        raise ModelError("equal masses give c = 0 and an infinite friction coefficient")
    return -lam * math.log(c)


def simulate_ou_exact(ou: OUParams, v0, times, stream) -> np.ndarray:
    """Sample ``Y`` at ``times`` from ``Y(0) = v0`` with the exact Gaussian transition.

    ``v0`` may be an array of starting points; the result then has shape
    ``(len(v0), len(times))``.
    """
    rng = as_generator(stream)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be non-decreasing and non-negative")
    y = np.array(v0, dtype=float)
    out = np.empty(y.shape + times.shape)
    t_prev = 0.0
    for j, t in enumerate(times):
        delta = t - t_prev
        if delta > 0:
            a = math.exp(-ou.theta * delta)
            sd = ou.eta * math.sqrt(-math.expm1(-2.0 * ou.theta * delta) / (2.0 * ou.theta))
            y = a * y + sd * rng.standard_normal(y.shape)
        out[..., j] = y
        t_prev = t
    return out


def simulate_ou_euler(ou: OUParams, v0, t_end: float, dt: float, stream) -> np.ndarray:
    """Euler-Maruyama value of ``Y(t_end)`` for each starting point in ``v0``."""
    rng = as_generator(stream)
    y = np.array(v0, dtype=float)
    n = int(math.ceil(t_end / dt - 1e-9))
    step = t_end / n
    sq = math.sqrt(step)
    for _ in range(n):
        y = y - ou.theta * y * step + ou.eta * sq * rng.standard_normal(y.shape)
    return y


def _linear_recursion(a, b, y0):
    """``y[i+1] = a[i] * y[i] + b[i]`` for all ``i``, returned with ``y[0] = y0``."""
    prod = np.concatenate([[1.0], np.cumprod(a)])
    return prod * (y0 + np.concatenate([[0.0], np.cumsum(b / prod[1:])]))


def simulate_coupled_pair(r: RenormalizedParams, lam: float, t_eval, stream, refine: int = 10, details: bool = False):
    """Absolute gaps ``|V^n(t) - Y(t)|`` for one shared Wiener path.

    The jump process collides at the points of its own Poisson(``lam``) clock;
    the impulse at ``U_k`` is ``sigma_x0 * (W(U_{k+1}) - W(U_k))``.  ``Y`` is
    integrated by Euler-Maruyama on the union of the jump times, a uniform mesh
    of ``1 / (refine * lam)`` and the evaluation times, driven by the same
    increments.  With ``details=True`` a dict with the jump times, both
    paths at ``t_eval`` and the shared grid is returned as well.
    """
    rng = as_generator(stream)
    t_eval = np.asarray(t_eval, dtype=float)
    horizon = float(t_eval.max())
    ou = derive_ou_params(r)
    c = r.c_n(lam)
    v0 = math.sqrt(r.sigma0_sq) * rng.standard_normal()

    expected = lam * horizon
    chunk = int(expected + 10.0 * math.sqrt(expected) + 16)
    gaps = rng.standard_exponential(chunk) / lam
    u = np.cumsum(gaps)
    while u[-1] <= horizon:
        more = np.cumsum(rng.standard_exponential(chunk) / lam) + u[-1]
        u = np.concatenate([u, more])
    m = int(np.searchsorted(u, horizon, side="right"))  # jumps in [0, horizon]
    u = u[: m + 1]  # keep the first jump past the horizon for the last increment

    mesh = 1.0 / (refine * lam)
    uniform = np.arange(0.0, u[-1], mesh)
    grid = np.unique(np.concatenate([[0.0], u, uniform, t_eval]))
    dt = np.diff(grid)
    dw = np.sqrt(dt) * rng.standard_normal(len(dt))
    w = np.concatenate([[0.0], np.cumsum(dw)])

    w_at_u = w[np.searchsorted(grid, u)]
    impulses = r.sigma_x0 * np.diff(w_at_u)  # one per jump U_1..U_m
    v_path = np.concatenate([[v0], propagate(v0, impulses, c)])
    v_t = v_path[np.searchsorted(u[:m], t_eval, side="right")]

    y = _linear_recursion(1.0 - ou.theta * dt, ou.eta * dw, v0)
    y_t = y[np.searchsorted(grid, t_eval)]
    err = np.abs(v_t - y_t)
    if details:
        return err, {"jump_times": u[:m], "v": v_t, "y": y_t, "v0": v0, "grid": grid, "w": w}
    return err


def binomial_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Two-sided Clopper-Pearson interval."""
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


@dataclass
class CoupledPathResult:
    lambda_n: float
    t_eval: np.ndarray
    abs_errors: np.ndarray  # (trials, len(t_eval))
    epsilon: float = 0.1

    @property
    def exceedance(self) -> np.ndarray:
        return (self.abs_errors > self.epsilon).mean(axis=0)

    def interval(self, level: float = 0.95):
        n = self.abs_errors.shape[0]
        k = (self.abs_errors > self.epsilon).sum(axis=0)
        return [binomial_interval(ki, n, level) for ki in k]


def coupled_experiment(
    r: RenormalizedParams,
    t_eval,
    trials: int,
    seed: int,
    epsilon: float = 0.1,
    workers: int = 1,
    refine: int = 10,
) -> list[CoupledPathResult]:
    """Coupled-path trials for every rate in ``r.lambda_n``; one stream per trial."""
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    results = []
    for lam in r.lambda_n:

        def trial(rng, size, lam=lam):
            return simulate_coupled_pair(r, lam, t_eval, rng, refine)

        rows = map_blocks(trial, trials, seed, f"ou-coupled:{lam!r}", block_size=1, workers=workers)
        results.append(CoupledPathResult(lam, t_eval, np.vstack(rows), epsilon))
    return results


def marginal_ks_distance(r: RenormalizedParams, lam: float, t: float, n_grid: int = 4001) -> float:
    """Sup distance between the exact law of ``V^n(t)`` and the OU marginal at ``t``."""
    p = r.gas_params(lam)
    mix = mixture(t, p, tol=1e-13)
    ou_sd = math.sqrt(derive_ou_params(r).variance(t, r.sigma0_sq))
    v = np.linspace(-8 * ou_sd, 8 * ou_sd, n_grid)
    return float(np.max(np.abs(mix.cdf(v) - stats.norm.cdf(v, scale=ou_sd))))


def jump_variance(r: RenormalizedParams, lam: float, t):
    """Variance of ``V^n(t)`` at rate ``lam`` from the closed form for ``V(t)``."""
    return time_variance(t, r.gas_params(lam))
