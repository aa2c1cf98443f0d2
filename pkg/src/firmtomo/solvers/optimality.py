"""Approximate stationarity test for the penalized subproblems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import MultimodalProblem


@dataclass(frozen=True)
class EtaOptimality:
    passed: bool
    min_entry: float  # smallest entry of w, must be >= 0
    active_grad_norm: float  # ||grad Q_J|| over J = {j : w_j > eta^2}
    min_grad: float  # smallest gradient entry, must be >= -eta
    eta: float
    active_count: int

    @property
    def margins(self) -> dict:
        """Positive values mean the condition holds with room to spare."""
        return {"nonnegativity": self.min_entry,
                "active_gradient": self.eta - self.active_grad_norm,
                "gradient_lower_bound": self.min_grad + self.eta}


def eta_optimality_check(problem: MultimodalProblem, w: np.ndarray, eta: float,
                         mu: np.ndarray | None = None, slack: float = 1e-12) -> EtaOptimality:
    """Check ``w >= 0``, ``||grad Q_J|| <= eta`` and ``grad Q >= -eta``.

    ``slack`` absorbs floating-point rounding in the comparisons.
    """
    w = np.asarray(w, dtype=np.float64)
    grad = problem.penalty_gradient(w, eta, mu).reshape(-1)
    flat = w.reshape(-1)
    active = flat > eta * eta
    active_norm = float(np.linalg.norm(grad[active]))
    min_entry = float(flat.min())
    min_grad = float(grad.min())
    passed = (min_entry >= 0.0
              and active_norm <= eta * (1 + slack) + slack
              and min_grad >= -eta * (1 + slack) - slack)
    return EtaOptimality(passed, min_entry, active_norm, min_grad, eta, int(active.sum()))


def optimality_gap_constant(N: int, n: int, dist_to_opt: float, grad_F_opt_norm: float,
                            eta: float) -> float:
    """``C_k`` in ``Q(u^k; eta_k) - F(u*) <= eta_k C_k`` for an ``eta_k``-optimal ``u^k``.

    ``C_k = 5/2 sqrt(Nn) ||u^k - u*|| + sqrt(Nn) ||grad F(u*)|| eta_k + Nn eta_k^2``.
    """
    r = (N * n) ** 0.5
    return 2.5 * r * dist_to_opt + r * grad_F_opt_norm * eta + N * n * eta * eta
