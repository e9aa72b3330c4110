"""Gas parameters, closed-form moments and the equilibrium law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    """Raised when parameters violate the model's standing assumptions."""


def restitution_coefficient(m_p: float, m_q: float) -> float:
    """Fraction of a P molecule's velocity kept through one collision with Q.

    Parameters
    ----------
    m_p, m_q : float
        Masses of the P and Q molecules, ``m_p >= m_q > 0``.

    Returns
    -------
    float
        ``(m_p - m_q) / (m_p + m_q)``, in ``[0, 1)``.
    """
    if not (m_q > 0 and m_p > 0):
        raise ModelError(f"masses must be positive, got m_p={m_p}, m_q={m_q}")
    if m_p < m_q:
        raise ModelError(f"model requires m_p >= m_q, got m_p={m_p} < m_q={m_q}")
    return (m_p - m_q) / (m_p + m_q)


@dataclass(frozen=True)
class GasParams:
    """Physical parameters of the P/Q mixture.

    ``c`` is always derived from the masses and never stored.
    """

    m_p: float
    m_q: float
    sigma0_sq: float
    sigmax_sq: float
    lam: float

    def __post_init__(self):
        restitution_coefficient(self.m_p, self.m_q)
        for name in ("sigma0_sq", "sigmax_sq", "lam"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ModelError(f"{name} must be positive and finite, got {value}")

    @classmethod
    def from_restitution(cls, c, sigma0_sq, sigmax_sq, lam):
        """Build parameters with ``m_q = 1`` and ``m_p`` chosen to give ``c``."""
        if not 0 <= c < 1:
            raise ModelError(f"restitution coefficient must lie in [0, 1), got {c}")
        return cls((1.0 + c) / (1.0 - c), 1.0, sigma0_sq, sigmax_sq, lam)

    @property
    def c(self) -> float:
        return restitution_coefficient(self.m_p, self.m_q)

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma0_sq)

    @property
    def sigmax(self) -> float:
        return math.sqrt(self.sigmax_sq)

    @property
    def relaxation_rate(self) -> float:
        """Decay rate ``lam * (1 - c**2)`` of the variance excess."""
        return self.lam * (1.0 - self.c**2)


@dataclass(frozen=True)
class EquilibriumSpec:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def equilibrium_spec(p: GasParams) -> EquilibriumSpec:
    return EquilibriumSpec(0.0, p.sigmax_sq / (1.0 - p.c**2))


def chain_variance(n, p: GasParams):
    """Variance of the velocity after ``n`` collisions.

    Accepts a scalar or an integer array for ``n``.
    """
    n = np.asarray(n)
    if np.any(n < 0):
        raise ModelError("collision count must be non-negative")
    c2 = p.c**2
    c2n = np.power(c2, n.astype(float))
    out = c2n * p.sigma0_sq + p.sigmax_sq * (1.0 - c2n) / (1.0 - c2)
    return float(out) if out.ndim == 0 else out


def time_variance(t, p: GasParams):
    """Variance of V(t) for the Poisson-clocked process."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ModelError("time must be non-negative")
    x = p.relaxation_rate * t
    eq = equilibrium_spec(p).variance
    out = p.sigma0_sq * np.exp(-x) - eq * np.expm1(-x)
    return float(out) if out.ndim == 0 else out
