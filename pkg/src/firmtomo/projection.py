"""Euclidean projection onto ``W = {w >= 0, D w = 0}`` by Dykstra's algorithm."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .operators import CouplingOperator


class ProjectionResult(NamedTuple):
    w: np.ndarray
    iterations: int
    converged: bool
    ops: int


def project_affine(D: CouplingOperator, w: np.ndarray) -> np.ndarray:
    """Projection onto ``{D w = 0}``: ``w - D^T (D D^T)^{-1} D w``."""
    return w - D.adjoint(D.apply(w)) / D.norm_sq()


def project_onto_W(D: CouplingOperator, v: np.ndarray, tol: float = 1e-10,
                   max_iter: int = 100_000) -> ProjectionResult:
    """Dykstra alternation between the coupling subspace and the orthant.

    Stops once successive orthant iterates move by at most ``tol`` and the
    coupling residual is within ``10 * tol``.  The returned point is exactly
    nonnegative.  ``ops`` counts elementwise flops for cost comparisons.

    The subspace is linear, so its Dykstra correction is always orthogonal to
    it and projects to zero; only the orthant keeps a correction term.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = np.asarray(v, dtype=np.float64)
    N, n = v.shape
    c = D.weights
    kappa = D.norm_sq()
    # Dx: 2(N-1) flops/px, scale 1, D^T and subtract: 2N-1, orthant step with
    # correction: 4 per entry, change norm: 2 per entry, residual norm: 2 per px.
    per_iter = (2 * (N - 1) + 1 + 2 * N - 1 + 2) * n + 6 * N * n
    x = v.copy()
    q = np.zeros_like(v)
    y = np.empty_like(v)
    x_new = np.empty_like(v)
    r = D.apply(x)
    ops = 0
    for it in range(1, max_iter + 1):
        r *= 1.0 / kappa
        np.multiply(c[:, None], r, out=y[:-1])
        y[:-1] += x[:-1]
        np.subtract(x[-1], r, out=y[-1])
        y += q
        np.maximum(y, 0.0, out=x_new)
        np.subtract(y, x_new, out=q)
        ops += per_iter
        x -= x_new
        change = np.linalg.norm(x)
        x, x_new = x_new, x
        r = D.apply(x)
        if change <= tol and np.linalg.norm(r) <= 10 * tol:
            return ProjectionResult(x, it, True, ops)
    return ProjectionResult(x, max_iter, False, ops)
