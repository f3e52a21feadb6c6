"""Multi-term Caputo subdiffusion: special functions, L1 schemes, solvers and energy diagnostics."""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DomainError, HypothesisError, SolverError, SubdiffError
from .special_fn import MLParams, SeriesPolicy, calE, calE_asymptotic, ml_classic, ml_multinomial
from .frac_calculus import AlgebraicKernel, History, TimeMesh, ZeroKernel
from .fode import FodeSpec, FractionalOrders, decay_g, solve_const_multiterm, step_fode_numeric
from .pde import Grid, ProblemSpec, run
from .analysis import sobolev_energy, validate_hypotheses

__all__ = [
    "SubdiffError", "DomainError", "ConvergenceError", "ConfigError", "SolverError", "HypothesisError",
    "MLParams", "SeriesPolicy", "ml_multinomial", "ml_classic", "calE", "calE_asymptotic",
    "TimeMesh", "History", "AlgebraicKernel", "ZeroKernel",
    "FractionalOrders", "FodeSpec", "solve_const_multiterm", "step_fode_numeric", "decay_g",
    "Grid", "ProblemSpec", "run", "sobolev_energy", "validate_hypotheses",
]
