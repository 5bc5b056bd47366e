"""Equivariant bases for matrix groups from generator constraints."""
from __future__ import annotations

from .groups import Group, catalog, direct_product, parse_group, sample_element
from .reps import Rep, dual, hom_rep, parse_rep, rho, drho, scalar_rep, tensor_rep
from .solver import (
    EquivariantBasis,
    Solver,
    krylov_nullspace,
    nullspace_dense,
    product_group_basis,
    solve_basis,
    solve_hom_basis,
)

__version__ = "0.1.0"

__all__ = [
    "Group",
    "catalog",
    "direct_product",
    "parse_group",
    "sample_element",
    "Rep",
    "dual",
    "hom_rep",
    "parse_rep",
    "rho",
    "drho",
    "scalar_rep",
    "tensor_rep",
    "EquivariantBasis",
    "Solver",
    "krylov_nullspace",
    "nullspace_dense",
    "product_group_basis",
    "solve_basis",
    "solve_hom_basis",
]
