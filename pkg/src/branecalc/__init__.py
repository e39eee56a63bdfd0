"""Graph weights and Koszul duality checks for pairs of coisotropic branes."""

from __future__ import annotations

from branecalc.ainfty import (
    TaylorStructure,
    check_algebra_relations,
    check_bimodule_relations,
    graded_algebra,
    graph_bimodule,
    pairing_bimodule,
)
from branecalc.geometry import WeightBook, WeightProblem, mc_integrate
from branecalc.graded_core import Ambient, DomainError, GradedElement, Splitting, schouten_bracket
from branecalc.hochschild import Cochain, MaurerCartanElement, Window, brace, identity_suite
from branecalc.koszul import check_keller, diagonal_concentration, koszul_complex, undeformed_bimodule
from branecalc.quantize import check_deformed_koszul, poisson_from_json, star_product

__version__ = "0.1.0"

__all__ = [
    "Ambient",
    "Cochain",
    "DomainError",
    "GradedElement",
    "MaurerCartanElement",
    "Splitting",
    "TaylorStructure",
    "WeightBook",
    "WeightProblem",
    "Window",
    "brace",
    "check_algebra_relations",
    "check_bimodule_relations",
    "check_deformed_koszul",
    "check_keller",
    "diagonal_concentration",
    "graded_algebra",
    "graph_bimodule",
    "identity_suite",
    "koszul_complex",
    "mc_integrate",
    "pairing_bimodule",
    "poisson_from_json",
    "schouten_bracket",
    "star_product",
    "undeformed_bimodule",
]
