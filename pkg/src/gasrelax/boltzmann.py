"""Velocity-grid solver for the linear Boltzmann equation of the collision model.

The collision operator is

    Q[f](v) = lam * ( (1/c) * int f((v - x)/c) g(x) dx  -  f(v) ),

with ``g`` the N(0, sigmax_sq) density of the bath.  The ``1/c`` Jacobian makes
the gain term the density of ``c V + X`` and keeps total mass fixed.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import GasParams

log = logging.getLogger(__name__)

BATH_CUTOFF = 8.0  # bath density treated as zero beyond this many std devs
QUADRATURES = ("substitution", "interpolation")


class GridError(ValueError):
    """The grid cannot represent the density or its collision gain."""


class StepSizeError(RuntimeError):
    """Time step violates the stability margin or the mass-drift tolerance."""


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class DensityGrid:
    """Density samples on the symmetric uniform grid ``[-v_max, v_max]``."""

    v_max: float
    values: np.ndarray
    t: float = 0.0
    clipped_mass: float = 0.0
    max_step_drift: float = 0.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise GridError("v_max must be positive")
        if self.values.ndim != 1 or len(self.values) < 3:
            raise GridError("need a 1-d grid with at least 3 points")

    @classmethod
    def from_function(cls, fn, v_max: float, n_points: int, t: float = 0.0) -> "DensityGrid":
        pts = np.linspace(-v_max, v_max, n_points)
        return cls(float(v_max), np.asarray(fn(pts), dtype=float), t)

    @classmethod
    def gaussian(cls, variance: float, v_max: float, n_points: int) -> "DensityGrid":
        return cls.from_function(
            lambda v: np.exp(-0.5 * v * v / variance) / math.sqrt(2 * math.pi * variance),
            v_max,
            n_points,
        )

    @property
    def v_min(self) -> float:
        return -self.v_max

    @property
    def n_points(self) -> int:
        return len(self.values)

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_points, self.h)

    @property
    def mass(self) -> float:
        return float(self.weights @ self.values)

    def moment(self, k: int) -> float:
        return float(self.weights @ (self.points**k * self.values))

    @property
    def variance(self) -> float:
        m = self.mass
        return self.moment(2) / m - (self.moment(1) / m) ** 2

    def l1_distance(self, other_values) -> float:
        return float(self.weights @ np.abs(self.values - np.asarray(other_values)))


def _bath_density(x, sigmax_sq):
    return np.exp(-0.5 * x * x / sigmax_sq) / math.sqrt(2 * math.pi * sigmax_sq)


@functools.lru_cache(maxsize=16)
def gain_matrix(n_points: int, v_max: float, p: GasParams, quadrature: str = "substitution") -> np.ndarray:
    """Dense matrix ``G`` with ``(G f)_i`` approximating the gain integral at ``v_i``.

    ``substitution`` integrates ``int f(u) g(v - c u) du`` on the grid nodes
    themselves (the change of variables ``x = v - c u`` absorbs the Jacobian).
    ``interpolation`` evaluates ``(1/c) int f((v - x)/c) g(x) dx`` on bath nodes
    spaced like the grid, with ``f`` linearly interpolated off the grid and
    zero-extended past its ends.
    """
    c = p.c
    v = np.linspace(-v_max, v_max, n_points)
    h = 2.0 * v_max / (n_points - 1)
    w = trapezoid_weights(n_points, h)
    cutoff = BATH_CUTOFF * p.sigmax
    if c == 0.0:
        # gain is g(v) times the total mass
        return np.outer(_bath_density(v, p.sigmax_sq), w)
    if quadrature == "substitution":
        arg = v[:, None] - c * v[None, :]
        kern = np.where(np.abs(arg) <= cutoff, _bath_density(arg, p.sigmax_sq), 0.0)
        return kern * w[None, :]
    if quadrature == "interpolation":
        m = int(math.ceil(cutoff / h))
        x = np.arange(-m, m + 1) * h
        wx = trapezoid_weights(len(x), h) * _bath_density(x, p.sigmax_sq) / c
        s = ((v[:, None] - x[None, :]) / c + v_max) / h
        j0 = np.floor(s).astype(np.int64)
        frac = s - j0
        rows = np.broadcast_to(np.arange(n_points)[:, None], s.shape)
        wgt = np.broadcast_to(wx[None, :], s.shape)
        g = np.zeros((n_points, n_points))
        for idx, fw in ((j0, 1.0 - frac), (j0 + 1, frac)):
            ok = (idx >= 0) & (idx < n_points)
            np.add.at(g, (rows[ok], idx[ok]), (wgt * fw)[ok])
        return g
    raise ValueError(f"unknown quadrature {quadrature!r}; choose from {QUADRATURES}")


def check_grid(grid: DensityGrid, p: GasParams, boundary_tol: float = 1e-10, quadrature: str = "substitution") -> None:
    """Reject grids whose edges carry density or whose gain term leaks mass off the ends."""
    peak = float(np.max(np.abs(grid.values)))
    edge = max(abs(grid.values[0]), abs(grid.values[-1]))
    if peak > 0 and edge > boundary_tol * max(peak, 1.0):
        raise GridError(f"boundary density {edge:.3g} exceeds tolerance; widen the grid")
    g = gain_matrix(grid.n_points, grid.v_max, p, quadrature)
    leak = grid.mass - float(grid.weights @ (g @ grid.values))
    if abs(leak) > boundary_tol:
        raise GridError(f"collision gain loses mass {leak:.3g} past the grid ends; widen the grid")


def collision_rhs(grid: DensityGrid, p: GasParams, quadrature: str = "substitution", check: bool = True) -> np.ndarray:
    """Collision term ``Q[f]`` at each grid point."""
    if check:
        check_grid(grid, p, quadrature=quadrature)
    g = gain_matrix(grid.n_points, grid.v_max, p, quadrature)
    return p.lam * (g @ grid.values - grid.values)


def stationarity_residual(grid: DensityGrid, p: GasParams, quadrature: str = "substitution") -> float:
    return float(np.max(np.abs(collision_rhs(grid, p, quadrature))))


def _rk4_step(g_mat, lam, f, dt):
    def rhs(y):
        return lam * (g_mat @ y - y)

    k1 = rhs(f)
    k2 = rhs(f + 0.5 * dt * k1)
    k3 = rhs(f + 0.5 * dt * k2)
    k4 = rhs(f + dt * k3)
    return f + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_density(
    grid: DensityGrid,
    p: GasParams,
    t_end: float,
    dt: float,
    quadrature: str = "substitution",
    mass_tol: float = 1e-8,
    clip_tol: float = 1e-6,
    callback=None,
) -> DensityGrid:
    """Advance ``grid`` by ``t_end`` with classical RK4 steps of at most ``dt``.

    Raises ``StepSizeError`` when ``dt * lam > 0.1``, when one step changes the
    mass by more than ``mass_tol``, or when the total clipped negative mass
    exceeds ``clip_tol``.  ``callback(grid)`` is called after every step.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if dt * p.lam > 0.1 + 1e-12:
        raise StepSizeError(f"dt*lambda = {dt * p.lam:.3g} exceeds the stability margin 0.1")
    if t_end == 0:
        return grid
    check_grid(grid, p, quadrature=quadrature)
    g_mat = gain_matrix(grid.n_points, grid.v_max, p, quadrature)
    w = grid.weights
    n_steps = int(math.ceil(t_end / dt - 1e-12))
    step = t_end / n_steps
    f = grid.values.copy()
    clipped = grid.clipped_mass
    max_drift = grid.max_step_drift
    mass = float(w @ f)
    for i in range(n_steps):
        f = _rk4_step(g_mat, p.lam, f, step)
        neg = f < 0
        if neg.any():
            clipped += float(-(w[neg] @ f[neg]))
            f[neg] = 0.0
            if clipped > clip_tol:
                raise StepSizeError(f"clipped negative mass {clipped:.3g} exceeds {clip_tol:g}")
        new_mass = float(w @ f)
        drift = abs(new_mass - mass)
        max_drift = max(max_drift, drift)
        if drift > mass_tol:
            raise StepSizeError(f"mass drift {drift:.3g} in one step exceeds {mass_tol:g}")
        mass = new_mass
        if callback is not None:
            callback(replace(grid, values=f.copy(), t=grid.t + (i + 1) * step,
                             clipped_mass=clipped, max_step_drift=max_drift))
    if clipped > 0:
        log.info("clipped %.3g of negative mass", clipped)
    return replace(grid, values=f, t=grid.t + t_end, clipped_mass=clipped, max_step_drift=max_drift)


def evolve_snapshots(grid, p, times, dt, quadrature="substitution", **kw):
    """Evolve through increasing ``times`` (measured from ``grid.t``) and return one grid per time."""
    out = []
    current = grid
    t_prev = 0.0
    for t in times:
        current = evolve_density(current, p, t - t_prev, dt, quadrature, **kw)
        out.append(current)
        t_prev = t
    return out
