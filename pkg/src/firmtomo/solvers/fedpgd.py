"""Federated projected gradient descent with an exact projection at the server."""

from __future__ import annotations

import math

import numpy as np

from ..fedsim import Federation
from ..operators import spectral_norm_sq
from ..problem import MultimodalProblem
from .firm import gamma_step
from .trace import Recorder, SolverTrace, StoppingRule, TraceRow


def fedpgd_solve(problem: MultimodalProblem, alpha: float | None = None,
                 stop: StoppingRule | None = None, w0: np.ndarray | None = None,
                 max_rounds: int = 100_000, projection_tol: float = 1e-10,
                 projection_max_iter: int = 100_000, workers: int = 1,
                 lambda_max: float | None = None, round_hook=None) -> tuple[np.ndarray, SolverTrace]:
    """Agents take gradient steps; the server projects onto ``{w >= 0, Dw = 0}``.

    ``alpha`` defaults to ``3 / (4 lambda_max(A^T A))``.  Projections that hit
    their iteration cap are counted in ``trace.notes["projection_failures"]``.
    """
    if alpha is None:
        alpha = gamma_step(lambda_max or spectral_norm_sq(problem.A))
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    stop = stop or StoppingRule.consecutive(1e-2)
    if stop.kind == "eta":
        raise ValueError("FedPGD has no penalty schedule; use 'consecutive' or 'discrepancy'")
    w = problem.zeros() if w0 is None else np.array(w0, dtype=np.float64)

    rec = Recorder("fedpgd")
    rec.trace.notes["alpha"] = alpha
    with Federation(problem.A, problem.b, problem.D, "fedpgd", workers, round_hook,
                    projection_tol=projection_tol,
                    projection_max_iter=projection_max_iter) as fed:
        server = fed.server
        reason = "budget"
        for t in range(max_rounds):
            server.t = t
            res = fed.round(w, alpha)
            rec.losses_at_input(float(res.losses.sum()))
            if stop.kind == "discrepancy" and stop.residuals_ok(np.sqrt(res.losses)):
                reason = "discrepancy"
                break
            step = float(np.linalg.norm(res.w - w))
            rec.pending(TraceRow(t + 1, 0, t, alpha, math.nan,
                                 float(np.linalg.norm(problem.D.apply(res.w))), step,
                                 rec.elapsed(), res.server_ops))
            w = res.w
            if stop.kind == "consecutive" and step <= stop.tol:
                reason = "consecutive"
                break
        rec.trace.notes["projection_failures"] = server.projection_failures
        rec.trace.notes["server_ops_total"] = server.total_ops
        f_last = None if reason == "discrepancy" else float(fed.losses(w).sum())
        return w, rec.finish(reason, f_last)
