"""The coupled nonnegative least-squares instance and its penalized forms.

This module is the centralized evaluator: it sees every ``b_i`` and is used
for traces, metrics and tests.  The federated solvers never hand it to the
server.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .operators import CouplingOperator, RadonOperator


@dataclass
class MultimodalProblem:
    """``min_{w >= 0} sum_i ||A w_i - b_i||^2  s.t.  w_N = sum_{i<N} c_i w_i``."""

    A: RadonOperator
    b: np.ndarray  # (N, m)
    weights: np.ndarray

    def __post_init__(self):
        self.b = np.atleast_2d(np.asarray(self.b, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.D = CouplingOperator(self.weights, self.A.n)
        if self.b.shape != (self.D.block_count, self.A.m):
            raise ValueError(f"measurements must have shape {(self.D.block_count, self.A.m)}, "
                             f"got {self.b.shape}")

    @classmethod
    def from_dataset(cls, data) -> "MultimodalProblem":
        return cls(data.A, data.measurements, data.weights)

    @property
    def N(self) -> int:
        return self.D.block_count

    @property
    def n(self) -> int:
        return self.A.n

    def zeros(self) -> np.ndarray:
        return np.zeros((self.N, self.n))

    @cached_property
    def Db(self) -> np.ndarray:
        """Data-side coupling residual ``b_N - sum c_i b_i``."""
        D = CouplingOperator(self.weights, self.A.m)
        return D.apply(self.b)

    def residuals(self, w: np.ndarray) -> np.ndarray:
        return np.vstack([self.A.forward(wi) - bi for wi, bi in zip(w, self.b)])

    def residual_norms(self, w: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.residuals(w), axis=1)

    def objective(self, w: np.ndarray) -> float:
        """Original objective ``f(w) = sum_i ||A w_i - b_i||^2``."""
        r = self.residuals(w)
        return float(np.sum(r * r))

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """Blockwise ``g_i = 2 A^T (A w_i - b_i)``."""
        return np.vstack([2.0 * self.A.adjoint(ri) for ri in self.residuals(w)])

    def modified_objective(self, w: np.ndarray) -> float:
        """``F(w) = f(w) - 1/2 ||A D w - D b||^2``; equal to ``f - ||Db||^2/2`` when ``Dw = 0``."""
        c = self.A.forward(self.D.apply(w)) - self.Db
        return self.objective(w) - 0.5 * float(np.dot(c, c))

    def modified_gradient(self, w: np.ndarray) -> np.ndarray:
        c = self.A.forward(self.D.apply(w)) - self.Db
        return self.gradient(w) - self.D.adjoint(self.A.adjoint(c))

    def penalty_objective(self, w: np.ndarray, eta: float, mu: np.ndarray | None = None) -> float:
        """``Q(w; eta) = F(w) + ||Dw||^2 / (4 eta)``, plus ``<mu, Dw>`` when ``mu`` is given."""
        if not eta > 0:
            raise ValueError("eta must be positive")
        dw = self.D.apply(w)
        val = self.modified_objective(w) + float(np.dot(dw, dw)) / (4.0 * eta)
        if mu is not None:
            val += float(np.dot(mu, dw))
        return val

    def penalty_gradient(self, w: np.ndarray, eta: float, mu: np.ndarray | None = None) -> np.ndarray:
        if not eta > 0:
            raise ValueError("eta must be positive")
        dw = self.D.apply(w)
        if mu is not None:
            dw = dw + 2.0 * eta * mu
        return self.modified_gradient(w) + self.D.adjoint(dw) / (2.0 * eta)
