"""Numerical functionals of torus-invariant metrics on ``O(m) -> P^n``."""
from .errors import AccuracyError, DomainError, SpecError, ToricFunError
from .fenchel import FenchelGrid, integrate_transform, transform, transform_grid, transform_points
from .functionals import (
    FunctionalReport,
    berman_F,
    comparison_bound_check,
    compute_c_m,
    compute_V,
    mixed_q,
    nu_margins,
    verify_main_bound,
)
from .metrics import (
    InvariantMetric,
    MetricSpec,
    canonical,
    fubini_study,
    is_dominated,
    metric_from_spec,
    project,
    random_admissible,
    scale,
)
from .norms import monomial_norm, monomial_norms
from .reporting import ExperimentConfig, oracle_dump, run_suite
from .torsion import bound_polynomial, find_m0, todd_coefficients, torsion_variation_bound

__all__ = [
    "AccuracyError",
    "DomainError",
    "ExperimentConfig",
    "FenchelGrid",
    "FunctionalReport",
    "InvariantMetric",
    "MetricSpec",
    "SpecError",
    "ToricFunError",
    "berman_F",
    "bound_polynomial",
    "canonical",
    "comparison_bound_check",
    "compute_V",
    "compute_c_m",
    "find_m0",
    "fubini_study",
    "integrate_transform",
    "is_dominated",
    "metric_from_spec",
    "mixed_q",
    "monomial_norm",
    "monomial_norms",
    "nu_margins",
    "oracle_dump",
    "project",
    "random_admissible",
    "run_suite",
    "scale",
    "todd_coefficients",
    "torsion_variation_bound",
    "transform",
    "transform_grid",
    "transform_points",
    "verify_main_bound",
]

__version__ = "0.1.0"
