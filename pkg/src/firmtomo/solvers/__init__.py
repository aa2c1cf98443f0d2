"""FIRM, FIRM+, FedPGD and the single-modality baselines."""

from ..projection import ProjectionResult, project_onto_W
from .fedpgd import fedpgd_solve
from .firm import FirmConfig, eta_initial, firm_solve, gamma_step, outer_iteration_count
from .iir import lsqr, pgd_iir_solve, plsqr_iir_solve
from .optimality import EtaOptimality, eta_optimality_check, optimality_gap_constant
from .trace import (REASONS, TRACE_COLUMNS, SolverTrace, StoppingRule, TraceRow,
                    desk_consecutive_tol)

__all__ = [
    "EtaOptimality", "FirmConfig", "ProjectionResult", "REASONS", "SolverTrace", "StoppingRule",
    "TRACE_COLUMNS", "TraceRow", "desk_consecutive_tol", "eta_initial", "eta_optimality_check",
    "fedpgd_solve", "firm_solve", "gamma_step", "lsqr", "optimality_gap_constant",
    "outer_iteration_count",
    "pgd_iir_solve", "plsqr_iir_solve", "project_onto_W",
]
