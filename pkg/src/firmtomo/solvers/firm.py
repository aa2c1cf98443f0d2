"""FIRM: federated inexact quadratic-penalty method, and its multiplier variant FIRM+."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fedsim import Federation
from ..operators import spectral_norm_sq
from ..problem import MultimodalProblem
from .trace import Recorder, SolverTrace, StoppingRule, TraceRow


@dataclass
class FirmConfig:
    """Step-size schedule for FIRM.

    ``gamma`` overrides ``beta``: the first penalty step becomes
    ``gamma * 3 / (4 lambda_max)``.  The first ``phase1_rounds`` rounds keep
    ``eta`` fixed; afterwards each outer iteration multiplies it by ``ratio``.
    """

    beta: float = 1.0
    ratio: float = 0.9
    epsilon: float = 1e-2
    phase1_rounds: int = 2000
    gamma: float | None = None
    max_total_rounds: int = 200_000
    mode: str = "QP"
    workers: int = 1
    lambda_max: float | None = None
    power_seed: int = 0

    def __post_init__(self):
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.phase1_rounds < 0 or self.max_total_rounds < 1:
            raise ValueError("round counts must be nonnegative")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.mode not in ("QP", "AL"):
            raise ValueError(f"mode must be 'QP' or 'AL', got {self.mode!r}")


def eta_initial(c, lambda_max: float, beta: float = 1.0) -> float:
    """``beta (2 - sum c_i^2) / (4 lambda_max(A^T A))``, the largest step with guaranteed descent when beta = 1."""
    c = np.asarray(c, dtype=np.float64)
    csq = float(np.dot(c, c))
    if csq > 1:
        raise ValueError(f"sum of squared coupling weights is {csq} > 1; the penalized problem is not convex")
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    if beta < 1:
        raise ValueError("beta must be >= 1")
    return beta * (2.0 - csq) / (4.0 * lambda_max)


def gamma_step(lambda_max: float, gamma: float = 1.0) -> float:
    """``gamma * 3 / (4 lambda_max)``, the constant step of the baselines."""
    return gamma * 3.0 / (4.0 * lambda_max)


def outer_iteration_count(eta1: float, epsilon: float, ratio: float) -> int:
    """Outer loops FIRM runs (no frozen phase): ``ceil(log(eps/eta1) / log r)``."""
    if eta1 < epsilon:
        return 0
    return math.floor(math.log(epsilon / eta1) / math.log(ratio)) + 1


def firm_solve(problem: MultimodalProblem, cfg: FirmConfig | None = None,
               stop: StoppingRule | None = None, w0: np.ndarray | None = None,
               callback=None, round_hook=None) -> tuple[np.ndarray, SolverTrace]:
    """Run FIRM through the federated round protocol.

    ``callback(k, eta, u, mu)`` fires at every outer-loop boundary with the
    inner-loop output ``u^k`` (``mu`` is ``None`` in QP mode).  ``round_hook``
    receives a per-round timing record (see ``Federation``).
    """
    cfg = cfg or FirmConfig()
    stop = stop or StoppingRule.eta_schedule()
    w = problem.zeros() if w0 is None else np.array(w0, dtype=np.float64)
    if w.shape != (problem.N, problem.n):
        raise ValueError(f"initial point must have shape {(problem.N, problem.n)}")
    if np.any(w < 0):
        raise ValueError("initial point must be nonnegative")

    lam = cfg.lambda_max or spectral_norm_sq(problem.A, seed=cfg.power_seed)
    if cfg.gamma is not None:
        eta = gamma_step(lam, cfg.gamma)
    else:
        eta = eta_initial(problem.weights, lam, cfg.beta)

    dual = cfg.mode == "AL"
    rec = Recorder("firmplus" if dual else "firm")
    rec.trace.notes.update(eta1=eta, lambda_max=lam)
    rounds = 0
    k = 1
    with Federation(problem.A, problem.b, problem.D, "firmplus" if dual else "firm",
                    cfg.workers, round_hook) as fed:
        server = fed.server
        while eta >= cfg.epsilon:
            server.k, server.eta = k, eta
            t = 0
            while True:
                if rounds >= cfg.max_total_rounds:
                    return w, _finish(rec, server, "budget", float(fed.losses(w).sum()))
                server.t = t
                res = fed.round(w, eta)
                rec.losses_at_input(float(res.losses.sum()))
                if stop.kind == "discrepancy" and stop.residuals_ok(np.sqrt(res.losses)):
                    return w, _finish(rec, server, "discrepancy")
                step = float(np.linalg.norm(res.w - w))
                rounds += 1
                rec.pending(TraceRow(rounds, k, t, eta, math.nan,
                                     float(np.linalg.norm(problem.D.apply(res.w))), step,
                                     rec.elapsed(), res.server_ops))
                w = res.w
                if step <= eta * eta:
                    break
                t += 1
            if dual:
                server.update_dual(w, eta)
            if callback is not None:
                callback(k, eta, w, server.mu if dual else None)
            if rounds >= cfg.phase1_rounds:
                eta *= cfg.ratio
            k += 1
        return w, _finish(rec, server, "eta_below_eps", float(fed.losses(w).sum()))


def _finish(rec: Recorder, server, reason: str, f_last: float | None = None) -> SolverTrace:
    if server.mu is not None:
        rec.trace.notes["mu"] = server.mu.copy()
    rec.trace.notes["server_ops_total"] = server.total_ops
    return rec.finish(reason, f_last)
