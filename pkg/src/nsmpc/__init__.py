"""Null-space primal-dual interior-point solver for linear MPC QPs."""
from .augment import Augmentation, RankError
from .bench import closed_loop, gen_mass_spring, gen_random_system, perf_profile, timing_sweep
from .blockla import (BlockCholFactor, BlockTriDiagSym, FactorizationError, block_cholesky,
                      block_solve)
from .eqinit import factorize_Ae, recover_equality_duals, solve_feasible_point
from .ipm import NullSpaceSolver, SolveResult, SolverOptions, Status
from .nullspace import build_basis, build_projections
from .problem import MpcProblem, ProblemError, StructuredQp, assemble_qp, objective_value
from .reference import ClassicalSolver, classical_solve, dense_newton_kkt

__version__ = "0.1.0"
