"""Multi-channel blind deconvolution with short filters.

Recovers a length-L signal and N length-K filters from their circular
convolutions by minimizing the factor norms of a rank-1 lift under the
observation constraint (augmented Lagrangian with L-BFGS inner solves and
random restarts), and certifies well-posedness of problem instances by
measuring the null space of the misfit Hessian at ground truth.
"""

from .experiments import (GridSpec, NoiseSpec, TrialOutcome, add_noise,
                          aggregate, boundary_k_star, run_noise_sweep,
                          run_phase_grid, sample_instance)
from .fourier import DimensionError, circ_conv, circ_corr, dft, idft, pad
from .identifiability import (IdentifiabilityReport, ambiguity_vector, analyze,
                              build_jacobian, condition1, condition2,
                              info_count_ok, make_counterexample, nullspace_dim)
from .model import (CandidateSolution, GroundTruthLift, ProblemDims,
                    ProblemInstance, adjoint_p, adjoint_q, forward,
                    load_instance, make_instance, relative_outer_error,
                    save_instance)
from .solver import SolveResult, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "CandidateSolution", "DimensionError", "GridSpec", "GroundTruthLift",
    "IdentifiabilityReport", "NoiseSpec", "ProblemDims", "ProblemInstance",
    "SolveResult", "SolverConfig", "TrialOutcome", "add_noise", "adjoint_p",
    "adjoint_q", "aggregate", "ambiguity_vector", "analyze", "boundary_k_star",
    "build_jacobian", "circ_conv", "circ_corr", "condition1", "condition2",
    "dft", "forward", "idft", "info_count_ok", "load_instance",
    "make_counterexample", "make_instance", "nullspace_dim", "pad",
    "relative_outer_error", "run_noise_sweep", "run_phase_grid",
    "sample_instance", "save_instance", "solve",
]
