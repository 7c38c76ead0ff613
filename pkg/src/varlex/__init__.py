"""Variable-exponent Orlicz norms, dyadic sparse bounds for higher commutators
and numerical two-weight (Fefferman-Phong type) certifiers on grids."""

__version__ = "0.1.0"

from .conditions import (FPReport, WeightPair, check_condition_F, fefferman_phong_thm11, fefferman_phong_thm12,
                         power_weight)
from .domain import Box, Cube, CubeLattice, DyadicCube, GridFunction, enumerate_cubes, random_indicator_sum
from .exceptions import ConfigError, DomainError
from .exponents import ExponentField, Field, combine, conjugate, delta_exponent, extremes, regularity
from .gphi import ConjugatePhi, GPhiFunction, PhiTriple, build_example_triple, young_defect
from .norm_formula import verify_lemma_chain, verify_norm_formula
from .operators import apply_commutator, check_class_D
from .spaces import indicator_norm, luxemburg_norm, modular, weighted_norm
from .sparse import build_stopping_family, dyadic_majorant, proof_exponents, stopping_functional

__all__ = [
    "__version__", "Box", "Cube", "CubeLattice", "DyadicCube", "GridFunction", "enumerate_cubes",
    "random_indicator_sum", "ConfigError", "DomainError", "ExponentField", "Field", "combine", "conjugate",
    "delta_exponent", "extremes", "regularity", "ConjugatePhi", "GPhiFunction", "PhiTriple", "build_example_triple",
    "young_defect", "verify_lemma_chain", "verify_norm_formula", "apply_commutator", "check_class_D",
    "indicator_norm", "luxemburg_norm", "modular", "weighted_norm", "build_stopping_family", "dyadic_majorant",
    "proof_exponents", "stopping_functional", "FPReport", "WeightPair", "check_condition_F",
    "fefferman_phong_thm11", "fefferman_phong_thm12", "power_weight",
]
