"""Stochastic simulation of a heated gas component relaxing through collisions with a bath."""

__version__ = "0.1.0"

from .model import EquilibriumSpec, GasParams, ModelError, chain_variance, equilibrium_spec, restitution_coefficient, time_variance  # noqa: E402

__all__ = [
    "EquilibriumSpec",
    "GasParams",
    "ModelError",
    "chain_variance",
    "equilibrium_spec",
    "restitution_coefficient",
    "time_variance",
]
