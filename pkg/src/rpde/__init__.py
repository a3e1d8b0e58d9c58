"""Unbiased randomized multilevel Monte Carlo for random elliptic PDEs on the unit square."""

from .errors import (
    ConfigError,
    ConvergenceError,
    EmbeddingError,
    EstimationError,
    InvalidCoefficientError,
    NumericError,
    ResourceLimitError,
    RpdeError,
    UnsupportedModelError,
)
from .mesh import DofMap, TriMesh, build_dofmap, build_mesh
from .sparse import SparseSpd, cg_solve
from .fields import FieldRealization, GrfLognormal, ScalarLognormal, restrict, sample_realization
from .fem import (
    ConstantFunctional,
    FemSolution,
    H1SeminormSquared,
    assemble,
    evaluate_functional,
    h1_seminorm_sq,
    solve_tilde_u,
)
from .estimator import Baseline, EstimateReport, LevelDistribution, run_estimate, sample_level
from .diagnostics import constraint_audit, cost_study, histogram, mse_study, truncated_mlmc

__version__ = "0.1.0"

__all__ = [
    "Baseline",
    "ConfigError",
    "ConstantFunctional",
    "ConvergenceError",
    "DofMap",
    "EmbeddingError",
    "EstimateReport",
    "EstimationError",
    "FemSolution",
    "FieldRealization",
    "GrfLognormal",
    "H1SeminormSquared",
    "InvalidCoefficientError",
    "LevelDistribution",
    "NumericError",
    "ResourceLimitError",
    "RpdeError",
    "ScalarLognormal",
    "SparseSpd",
    "TriMesh",
    "UnsupportedModelError",
    "assemble",
    "build_dofmap",
    "build_mesh",
    "cg_solve",
    "constraint_audit",
    "cost_study",
    "evaluate_functional",
    "h1_seminorm_sq",
    "histogram",
    "mse_study",
    "restrict",
    "run_estimate",
    "sample_level",
    "sample_realization",
    "solve_tilde_u",
    "truncated_mlmc",
]
