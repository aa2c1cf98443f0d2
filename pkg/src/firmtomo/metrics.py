"""Evaluation of final iterates: objective, feasibility, distance to truth and derived percentages."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .phantoms import discrepancy_threshold
from .problem import MultimodalProblem


@dataclass(frozen=True)
class EvalReport:
    f: float
    constraint_norm: float
    dist_total: float
    dist_blocks: tuple[float, ...]
    residual_norms: tuple[float, ...]
    thresholds: tuple[float, ...] = ()  # empty when the data are noiseless

    @property
    def within_discrepancy(self) -> bool | None:
        """``True`` when every residual is under its threshold, ``None`` without thresholds."""
        if not self.thresholds:
            return None
        return all(r <= t for r, t in zip(self.residual_norms, self.thresholds))

    def as_dict(self) -> dict:
        out = {"f": self.f, "constraint_norm": self.constraint_norm, "dist_total": self.dist_total}
        for i, d in enumerate(self.dist_blocks, 1):
            out[f"dist_b{i}"] = d
        for i, r in enumerate(self.residual_norms, 1):
            out[f"residual_b{i}"] = r
        for i, t in enumerate(self.thresholds, 1):
            out[f"threshold_b{i}"] = t
        out["within_discrepancy"] = self.within_discrepancy
        return out


def evaluate(problem: MultimodalProblem, w: np.ndarray, w_true: np.ndarray | None = None,
             s: float = 0.0) -> EvalReport:
    """Metrics of a final ``(N, n)`` iterate; distances are NaN without a ground truth."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (problem.N, problem.n):
        raise ValueError(f"iterate must have shape {(problem.N, problem.n)}, got {w.shape}")
    res = problem.residual_norms(w)
    f = float(np.sum(res * res))
    if w_true is None:
        dist_blocks = (math.nan,) * problem.N
        dist_total = math.nan
    else:
        diff = w - np.asarray(w_true, dtype=np.float64)
        dist_blocks = tuple(float(d) for d in np.linalg.norm(diff, axis=1))
        dist_total = float(np.linalg.norm(diff))
    thresholds = tuple(discrepancy_threshold(bi, s) for bi in problem.b) if s > 0 else ()
    return EvalReport(f, float(np.linalg.norm(problem.D.apply(w))), dist_total, dist_blocks,
                      tuple(float(r) for r in res), thresholds)


def relative_gap(d_iir: float, d_joint: float) -> float:
    """Percentage by which the joint reconstruction is closer to the truth than IIR."""
    if d_iir == 0:
        raise ValueError("relative gap is undefined for d_iir = 0")
    return 100.0 * (d_iir - d_joint) / d_iir


def iir_improvement(d_plsqr: float, d_pgd: float) -> float:
    """Percentage by which projected gradient beats clipped LSQR (negative if worse)."""
    if d_plsqr == 0:
        raise ValueError("improvement is undefined for d_plsqr = 0")
    return 100.0 * (d_plsqr - d_pgd) / d_plsqr


def percentile_summary(values: Iterable[float]) -> dict:
    """20th and 80th percentiles and the mean, ignoring NaNs (errored cells)."""
    v = np.asarray(list(values), dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return {"p20": math.nan, "mean": math.nan, "p80": math.nan, "count": 0}
    return {"p20": float(np.percentile(v, 20)), "mean": float(v.mean()),
            "p80": float(np.percentile(v, 80)), "count": int(v.size)}


@dataclass(frozen=True)
class TauDiagnostic:
    mu_star_norm: float
    f_star_sqrt: float
    atdb_norm: float
    source: str = "firmplus"
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def tau(self) -> float:
        return max(self.mu_star_norm, self.f_star_sqrt, self.atdb_norm)


def tau_diagnostic(problem: MultimodalProblem, epsilon: float = 1e-4, cfg=None,
                   reference_solver: str = "firmplus") -> TauDiagnostic:
    """``max(||mu*||, sqrt(f*), ||A^T Db||)`` from a tight multiplier-method reference solve.

    ``mu*`` is the terminal multiplier and ``f*`` the terminal objective.  A
    reference solve that ends on its round budget is flagged in ``notes``.
    """
    from dataclasses import replace

    from .solvers.firm import FirmConfig, firm_solve

    if reference_solver != "firmplus":
        raise ValueError("the tau diagnostic needs multiplier estimates; use 'firmplus'")
    cfg = replace(cfg or FirmConfig(gamma=1.0), mode="AL", epsilon=epsilon)
    w, trace = firm_solve(problem, cfg)
    mu = trace.notes["mu"]
    atdb = float(np.linalg.norm(problem.A.adjoint(problem.Db)))
    notes = {"reason": trace.reason, "rounds": len(trace), "budget_exhausted": trace.reason == "budget",
             "constraint_norm": float(np.linalg.norm(problem.D.apply(w)))}
    return TauDiagnostic(float(np.linalg.norm(mu)), math.sqrt(problem.objective(w)), atdb,
                         reference_solver, notes)


def report_columns(N: int) -> list[str]:
    return (["angles", "s", "trial", "solver", "gamma", "f", "constraint_norm", "dist_total"]
            + [f"dist_b{i}" for i in range(1, N + 1)] + ["gap_percent"])


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_report_csv(path: str | Path, rows: Sequence[dict], N: int) -> None:
    """One line per (angles, s, trial, solver, gamma) cell; missing keys are left blank."""
    cols = report_columns(N)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(c)) for c in cols) + "\n")


def read_report_csv(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for key, val in rec.items():
                if key in ("solver",):
                    row[key] = val
                elif key in ("angles", "trial"):
                    row[key] = int(val)
                else:
                    row[key] = float(val) if val != "" else math.nan
            out.append(row)
    return out
