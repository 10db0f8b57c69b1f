"""Eyring-Kramers transition times for 1-D stochastic Allen-Cahn equations."""

__version__ = "0.1.0"

from .potential import (  # noqa: E402
    BoundaryCondition,
    FieldProfile,
    Grid,
    PotentialSpec,
    TridiagonalOperator,
    continuum_energy,
    discrete_energy,
    discrete_gradient,
    discrete_hessian,
    eval_potential,
    make_grid,
)

__all__ = [
    "BoundaryCondition",
    "FieldProfile",
    "Grid",
    "PotentialSpec",
    "TridiagonalOperator",
    "continuum_energy",
    "discrete_energy",
    "discrete_gradient",
    "discrete_hessian",
    "eval_potential",
    "make_grid",
]
