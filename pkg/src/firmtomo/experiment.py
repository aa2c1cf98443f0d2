"""Building instances from a config and running one solver or one sweep cell."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, cell_seed
from .metrics import EvalReport, evaluate, relative_gap
from .operators import PixelGrid, RadonOperator, build_radon, default_geometry, spectral_norm_sq
from .phantoms import GroundTruth, MultimodalDataset, make_ground_truth, simulate
from .problem import MultimodalProblem
from .solvers import (FirmConfig, SolverTrace, StoppingRule, desk_consecutive_tol, fedpgd_solve,
                      firm_solve, gamma_step, pgd_iir_solve, plsqr_iir_solve)


@dataclass
class Instance:
    grid: PixelGrid
    A: RadonOperator
    lambda_max: float
    truth: GroundTruth
    data: MultimodalDataset
    problem: MultimodalProblem


@dataclass
class SolveResult:
    solver: str
    w: np.ndarray
    traces: list[SolverTrace]  # one for the joint solvers, one per modality for IIR
    report: EvalReport
    round_log: list[dict] = field(default_factory=list)

    @property
    def reason(self) -> str:
        """Joint solvers report their own reason; IIR reports the first non-success reason."""
        reasons = [t.reason for t in self.traces]
        for r in ("error", "budget"):
            if r in reasons:
                return r
        return reasons[0]


_operator_cache: dict = {}


def operator_for(cfg: ExperimentConfig, angles: int) -> tuple[PixelGrid, RadonOperator, float]:
    key = (cfg.grid_size, cfg.object_width, int(angles))
    if key not in _operator_cache:
        grid = PixelGrid(cfg.grid_size, cfg.grid_size, cfg.pixel_size)
        A = build_radon(grid, default_geometry(grid, int(angles)))
        _operator_cache[key] = (grid, A, spectral_norm_sq(A))
    return _operator_cache[key]


def build_instance(cfg: ExperimentConfig, angles: int, s: float, noise_seed: int,
                   trial: int = 0) -> Instance:
    grid, A, lam = operator_for(cfg, angles)
    truth = make_ground_truth(grid, cfg.weights, cfg.variant_seed)
    data = simulate(truth, A, cfg.incident_energy, s, noise_seed, trial,
                    cfg.relative_noise, cfg.pre_log_noise)
    return Instance(grid, A, lam, truth, data, MultimodalProblem.from_dataset(data))


def firm_config(cfg: ExperimentConfig, gamma: float | None, lam: float, mode: str = "QP") -> FirmConfig:
    return FirmConfig(beta=cfg.beta, ratio=cfg.ratio, epsilon=cfg.epsilon,
                      phase1_rounds=cfg.phase1_rounds, gamma=gamma,
                      max_total_rounds=cfg.max_total_rounds, mode=mode, workers=cfg.workers,
                      lambda_max=lam)


def consecutive_tol(cfg: ExperimentConfig, N: int, n: int) -> float:
    return cfg.fedpgd_tol if cfg.fedpgd_tol is not None else desk_consecutive_tol(N, n)


def run_solver(inst: Instance, cfg: ExperimentConfig, solver: str, gamma: float | None = 1.0,
               s: float = 0.0, keep_round_log: bool = False) -> SolveResult:
    """One solve with the stopping rule of the experiment protocol.

    Noisy data (``s > 0``) stop by the discrepancy principle; noiseless data
    use the FIRM eta schedule (FIRM, FIRM+) or the consecutive-iterate rule.
    """
    P = inst.problem
    lam = inst.lambda_max
    log: list[dict] = []
    hook = log.append if keep_round_log else None
    discrepancy = StoppingRule.discrepancy(P.b, s) if s > 0 else None
    tol = consecutive_tol(cfg, P.N, P.n)
    if solver in ("firm", "firmplus"):
        fc = firm_config(cfg, gamma, lam, "AL" if solver == "firmplus" else "QP")
        w, tr = firm_solve(P, fc, discrepancy, round_hook=hook)
        traces = [tr]
    elif solver == "fedpgd":
        alpha = gamma_step(lam, gamma if gamma is not None else 1.0)
        w, tr = fedpgd_solve(P, alpha, discrepancy or StoppingRule.consecutive(tol),
                             max_rounds=cfg.max_iter, workers=cfg.workers, lambda_max=lam,
                             round_hook=hook)
        traces = [tr]
    elif solver == "pgd":
        alpha = gamma_step(lam, gamma if gamma is not None else 1.0)
        blocks, traces = [], []
        for i, bi in enumerate(P.b):
            stop = (StoppingRule.discrepancy(bi, s) if s > 0
                    else StoppingRule.consecutive(tol))
            wi, tr = pgd_iir_solve(inst.A, bi, alpha, stop, max_iter=cfg.max_iter)
            blocks.append(wi)
            traces.append(tr)
        w = np.vstack(blocks)
    elif solver == "plsqr":
        blocks, traces = [], []
        for bi in P.b:
            stop = StoppingRule.discrepancy(bi, s) if s > 0 else StoppingRule.consecutive(1e-8)
            wi, tr = plsqr_iir_solve(inst.A, bi, stop, max_iter=cfg.max_iter)
            tr.notes.pop("unclipped", None)
            blocks.append(wi)
            traces.append(tr)
        w = np.vstack(blocks)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    report = evaluate(P, w, inst.truth.stacked, s)
    return SolveResult(solver, w, traces, report, log)


def report_row(angles: int, s: float, trial: int, solver: str, gamma: float,
               rep: EvalReport, gap: float | None = None) -> dict:
    row = {"angles": int(angles), "s": float(s), "trial": int(trial), "solver": solver,
           "gamma": float(gamma), "f": rep.f, "constraint_norm": rep.constraint_norm,
           "dist_total": rep.dist_total, "gap_percent": gap}
    for i, d in enumerate(rep.dist_blocks, 1):
        row[f"dist_b{i}"] = d
    return row


def run_cell(cfg: ExperimentConfig, angles: int, s: float, gamma: float, trial: int) -> dict:
    """Joint FIRM vs IIR-PGD (and optionally PLSQR) on one dataset sample.

    Noiseless cells follow the protocol's schedule with the cell's ``gamma``.
    Returns JSON-ready rows; a failure is reported as an ``error`` field.
    """
    seed = cell_seed(cfg.seed, angles, s, gamma, trial)
    out = {"angles": int(angles), "s": float(s), "gamma": float(gamma), "trial": int(trial),
           "seed": seed, "rows": [], "reasons": {}}
    try:
        inst = build_instance(cfg, angles, s, seed, trial)
        joint = run_solver(inst, cfg, "firm", gamma, s)
        iir = run_solver(inst, cfg, "pgd", gamma, s)
        gap = relative_gap(iir.report.dist_total, joint.report.dist_total)
        out["rows"].append(report_row(angles, s, trial, "firm", gamma, joint.report, gap))
        out["rows"].append(report_row(angles, s, trial, "pgd", gamma, iir.report))
        out["reasons"] = {"firm": joint.reason, "pgd": iir.reason}
        out["gap_percent"] = gap
        if cfg.include_plsqr:
            ls = run_solver(inst, cfg, "plsqr", gamma, s)
            out["rows"].append(report_row(angles, s, trial, "plsqr", gamma, ls.report))
            out["reasons"]["plsqr"] = ls.reason
    except Exception as exc:  # recorded and the sweep moves on
        out["error"] = f"{type(exc).__name__}: {exc}"
        out["gap_percent"] = math.nan
    return out
