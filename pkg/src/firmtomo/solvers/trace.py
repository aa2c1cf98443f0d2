"""Per-round solver records and stopping rules."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..phantoms import discrepancy_threshold

TRACE_COLUMNS = ("iter", "k", "t", "eta", "f", "constraint_norm", "step_norm", "seconds", "server_ops")
REASONS = ("eta_below_eps", "consecutive", "discrepancy", "budget", "error")


class TraceRow(NamedTuple):
    iter: int
    k: int
    t: int
    eta: float
    f: float
    constraint_norm: float
    step_norm: float
    seconds: float
    server_ops: int


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


@dataclass
class SolverTrace:
    solver: str
    rows: list[TraceRow] = field(default_factory=list)
    reason: str | None = None
    notes: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, path: str | Path, timing: bool = True) -> None:
        """Write the trace.  ``timing=False`` zeroes wall-clock seconds for byte-stable output."""
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                if not timing:
                    row = row._replace(seconds=0.0)
                fh.write(",".join(_fmt(x) for x in row) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, solver: str = "") -> "SolverTrace":
        trace = cls(solver)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
            for rec in reader:
                trace.append(TraceRow(int(rec["iter"]), int(rec["k"]), int(rec["t"]),
                                      float(rec["eta"]), float(rec["f"]),
                                      float(rec["constraint_norm"]), float(rec["step_norm"]),
                                      float(rec["seconds"]), int(rec["server_ops"])))
        return trace


@dataclass
class StoppingRule:
    """``eta`` (the FIRM step-size schedule), ``consecutive`` (``||w^t - w^{t-1}|| <= tol``)
    or ``discrepancy`` (every modality residual under its threshold)."""

    kind: str = "eta"
    tol: float = 1e-2
    thresholds: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("eta", "consecutive", "discrepancy"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.kind == "discrepancy":
            if self.thresholds is None:
                raise ValueError("discrepancy rule needs per-modality thresholds")
            self.thresholds = np.atleast_1d(np.asarray(self.thresholds, dtype=np.float64))
            if np.any(self.thresholds <= 0):
                raise ValueError("discrepancy thresholds must be positive (noise level s > 0)")

    @classmethod
    def eta_schedule(cls) -> "StoppingRule":
        return cls("eta")

    @classmethod
    def consecutive(cls, tol: float) -> "StoppingRule":
        return cls("consecutive", tol)

    @classmethod
    def discrepancy(cls, measurements, s: float) -> "StoppingRule":
        b = np.atleast_2d(measurements)
        return cls("discrepancy", thresholds=[discrepancy_threshold(bi, s) for bi in b])

    def residuals_ok(self, residual_norms) -> bool:
        return bool(np.all(np.asarray(residual_norms) <= self.thresholds))


def desk_consecutive_tol(N: int, n: int, base: float = 1e-2, ref_side: int = 250) -> float:
    """Consecutive-iterate tolerance rescaled from the reference ``ref_side``^2 resolution."""
    return base * math.sqrt(N * n) / math.sqrt(N * ref_side ** 2)


class Recorder:
    """Collects trace rows whose objective arrives one round late.

    A round reports agent losses at the broadcast iterate, which is the
    previous round's output; the final row is completed by ``finish``.
    """

    def __init__(self, solver: str, clock=time.perf_counter):
        self.trace = SolverTrace(solver)
        self._clock = clock
        self._start = clock()
        self._pending: TraceRow | None = None

    def elapsed(self) -> float:
        return self._clock() - self._start

    def losses_at_input(self, f_in: float) -> None:
        if self._pending is not None:
            self.trace.append(self._pending._replace(f=f_in))
            self._pending = None

    def pending(self, row: TraceRow) -> None:
        self._pending = row

    def finish(self, reason: str, f_last: float | None = None) -> SolverTrace:
        if self._pending is not None:
            self.trace.append(self._pending._replace(f=f_last if f_last is not None else math.nan))
            self._pending = None
        self.trace.reason = reason
        return self.trace
