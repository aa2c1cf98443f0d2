"""Single-modality baselines: projected gradient (PGD) and LSQR followed by one clip (PLSQR)."""

from __future__ import annotations

import math

import numpy as np

from ..operators import RadonOperator, spectral_norm_sq
from .firm import gamma_step
from .trace import Recorder, SolverTrace, StoppingRule, TraceRow


def pgd_iir_solve(A: RadonOperator, b: np.ndarray, alpha: float | None = None,
                  stop: StoppingRule | None = None, w0: np.ndarray | None = None,
                  max_iter: int = 100_000) -> tuple[np.ndarray, SolverTrace]:
    """``w <- (w - alpha * 2 A^T (A w - b))_+`` until the stopping rule fires."""
    b = np.asarray(b, dtype=np.float64)
    if alpha is None:
        alpha = gamma_step(spectral_norm_sq(A))
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    stop = stop or StoppingRule.consecutive(1e-2)
    w = np.zeros(A.n) if w0 is None else np.array(w0, dtype=np.float64)
    rec = Recorder("pgd")
    reason = "budget"
    r = A.forward(w) - b
    for t in range(max_iter):
        rec.losses_at_input(float(np.dot(r, r)))
        if stop.kind == "discrepancy" and stop.residuals_ok([np.linalg.norm(r)]):
            reason = "discrepancy"
            break
        w_new = np.maximum(w - alpha * (2.0 * A.adjoint(r)), 0.0)
        step = float(np.linalg.norm(w_new - w))
        rec.pending(TraceRow(t + 1, 0, t, alpha, math.nan, math.nan, step, rec.elapsed(), 0))
        w = w_new
        r = A.forward(w) - b
        if stop.kind == "consecutive" and step <= stop.tol:
            reason = "consecutive"
            break
    return w, rec.finish(reason, float(np.dot(r, r)))


def lsqr(A: RadonOperator, b: np.ndarray, atol: float = 1e-8, btol: float = 1e-8,
         iter_lim: int | None = None, residual_target: float | None = None, rec: Recorder | None = None):
    """Golub-Kahan bidiagonalization least squares (Paige & Saunders), no damping.

    Returns ``(x, reason, info)``.  ``residual_target`` stops as soon as the
    running residual estimate drops to it (discrepancy principle).
    """
    b = np.asarray(b, dtype=np.float64)
    iter_lim = iter_lim or 2 * A.n
    x = np.zeros(A.n)
    info = {"breakdown": False, "iterations": 0, "rnorm": 0.0}
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return x, "consecutive", info
    u = b / beta
    v = A.adjoint(u)
    alpha = float(np.linalg.norm(v))
    info["rnorm"] = beta
    if residual_target is not None and beta <= residual_target:
        return x, "discrepancy", info
    if alpha == 0.0:
        # A^T b = 0: x = 0 already solves the normal equations
        info["breakdown"] = True
        return x, "error", info
    v = v / alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    anorm_sq = 0.0
    bnorm = beta
    reason = "budget"
    for it in range(1, iter_lim + 1):
        u = A.forward(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u = u / beta
        anorm_sq += alpha * alpha + beta * beta
        v = A.adjoint(u) - beta * v
        alpha = float(np.linalg.norm(v))
        if alpha > 0:
            v = v / alpha

        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar

        dx = (phi / rho) * w
        x = x + dx
        w = v - (theta / rho) * w

        rnorm = phibar
        arnorm = phibar * alpha * abs(c)
        anorm = math.sqrt(anorm_sq)
        xnorm = float(np.linalg.norm(x))
        info.update(iterations=it, rnorm=rnorm)
        if rec is not None:
            rec.trace.append(TraceRow(it, 0, it - 1, math.nan, float(rnorm * rnorm), math.nan,
                                      float(np.linalg.norm(dx)), rec.elapsed(), 0))
        if residual_target is not None and rnorm <= residual_target:
            reason = "discrepancy"
            break
        if rnorm <= btol * bnorm + atol * anorm * xnorm:
            reason = "consecutive"
            break
        if rnorm > 0 and arnorm <= atol * anorm * rnorm:
            reason = "consecutive"
            break
        if rnorm == 0 or (alpha == 0 and beta == 0):
            reason = "consecutive"
            break
    return x, reason, info


def plsqr_iir_solve(A: RadonOperator, b: np.ndarray, stop: StoppingRule | None = None,
                    max_iter: int | None = None) -> tuple[np.ndarray, SolverTrace]:
    """LSQR to the stopping rule, then a single clip onto ``w >= 0``.

    With a ``consecutive`` rule its ``tol`` is LSQR's ``atol = btol``.  The
    unclipped iterate is kept in ``trace.notes["unclipped"]``.
    """
    stop = stop or StoppingRule.consecutive(1e-8)
    rec = Recorder("plsqr")
    if stop.kind == "discrepancy":
        x, reason, info = lsqr(A, b, atol=0.0, btol=0.0, iter_lim=max_iter,
                               residual_target=float(stop.thresholds[0]), rec=rec)
    elif stop.kind == "consecutive":
        x, reason, info = lsqr(A, b, atol=stop.tol, btol=stop.tol, iter_lim=max_iter, rec=rec)
    else:
        raise ValueError("PLSQR supports 'consecutive' or 'discrepancy' stopping")
    trace = rec.finish(reason)
    trace.notes.update(info)
    trace.notes["unclipped"] = x
    return np.maximum(x, 0.0), trace
