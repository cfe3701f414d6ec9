"""Simulation and bound verification for impulsive delay Volterra
integro-differential equations with integral jump conditions."""

from .bounds import (
    BoundReport,
    CertificateReport,
    DependenceReport,
    DivergenceError,
    PachpatteInstance,
    apriori_bound,
    build_oracle_grid,
    check_dependence,
    compute_Ck,
    dependence_function_bound,
    dependence_initial_bound,
    dependence_parameter_bound,
    existence_certificate,
    maximal_solution,
    pachpatte_bound,
    random_instance,
)
from .model import (
    CatalogEntry,
    FreeParameter,
    ImpulsiveProblem,
    LipschitzData,
    build_catalog,
    get_entry,
    validate,
    with_history,
)
from .semigroup import SemigroupBound, evolve, operator_norm_bound
from .solver import (
    ConvergenceError,
    Discretization,
    PicardControl,
    SolveReport,
    jump_value,
    mild_residual,
    solve_mild,
    solve_segment,
    volterra_term,
    window_integral,
)
from .trajectory import HistorySegment, PiecewiseTrajectory, sigma_diff

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "CatalogEntry",
    "CertificateReport",
    "ConvergenceError",
    "DependenceReport",
    "Discretization",
    "DivergenceError",
    "FreeParameter",
    "HistorySegment",
    "ImpulsiveProblem",
    "LipschitzData",
    "PachpatteInstance",
    "PicardControl",
    "PiecewiseTrajectory",
    "SemigroupBound",
    "SolveReport",
    "apriori_bound",
    "build_catalog",
    "build_oracle_grid",
    "check_dependence",
    "compute_Ck",
    "dependence_function_bound",
    "dependence_initial_bound",
    "dependence_parameter_bound",
    "evolve",
    "existence_certificate",
    "get_entry",
    "jump_value",
    "maximal_solution",
    "mild_residual",
    "operator_norm_bound",
    "pachpatte_bound",
    "random_instance",
    "sigma_diff",
    "solve_mild",
    "solve_segment",
    "validate",
    "volterra_term",
    "window_integral",
    "with_history",
]
