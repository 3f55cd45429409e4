"""Computational toolkit for topological toric manifolds and their equivariant bundles."""

from ._backend import BACKEND
from .fan import Fan, ValidationReport, dual_family, kernel_relations, load_bundled_fan, load_fan, validate
from .klyachko import KlyachkoData, Subspace, check_all, check_cone, check_morphism, char_rep, load_klyachko
from .manifold import ChartPoint, action_eval, orbit_of, orbit_poset, transition, transition_eval
from .rring import (
    ONE,
    ZERO,
    RScalar,
    RVector,
    TorusPoint,
    bracket,
    char_eval,
    cochar_eval,
    ge_s,
    matrix_embed,
    r_add,
    r_mul,
    rpow,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ONE",
    "ZERO",
    "RScalar",
    "RVector",
    "TorusPoint",
    "r_add",
    "r_mul",
    "matrix_embed",
    "bracket",
    "rpow",
    "char_eval",
    "cochar_eval",
    "ge_s",
    "Fan",
    "ValidationReport",
    "load_fan",
    "load_bundled_fan",
    "validate",
    "dual_family",
    "kernel_relations",
    "ChartPoint",
    "transition",
    "transition_eval",
    "action_eval",
    "orbit_of",
    "orbit_poset",
    "Subspace",
    "KlyachkoData",
    "load_klyachko",
    "check_cone",
    "check_all",
    "char_rep",
    "check_morphism",
]
