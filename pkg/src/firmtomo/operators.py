"""Linear operators: the parallel-beam Radon matrix and the coupling operator.

Images are vectorized row-major with row 0 at the top of the grid.  A beamlet
``(theta, tau)`` is the line ``{p : <p - origin, (cos theta, sin theta)> = s_tau}``
where ``s_tau`` is its signed detector offset.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConvergenceWarning",
    "PixelGrid",
    "ScanGeometry",
    "RadonOperator",
    "CouplingOperator",
    "build_radon",
    "default_geometry",
    "spectral_norm_sq",
    "write_triplets",
    "read_triplets",
]

# Entries below this length (cm) are corner-grazing dust.
MIN_LENGTH = 1e-12


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped on its iteration cap."""


@dataclass(frozen=True)
class PixelGrid:
    rows: int
    cols: int
    pixel_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def width(self) -> float:
        return self.cols * self.pixel_size

    @property
    def height(self) -> float:
        return self.rows * self.pixel_size

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def bounds(self) -> tuple[float, float, float, float]:
        """Return ``(xmin, xmax, ymin, ymax)`` in cm."""
        ox, oy = self.origin
        return (ox - self.width / 2, ox + self.width / 2,
                oy - self.height / 2, oy + self.height / 2)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates as two ``(rows, cols)`` arrays."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.cols) - (self.cols - 1) / 2) * self.pixel_size
        ys = oy + ((self.rows - 1) / 2 - np.arange(self.rows)) * self.pixel_size
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class ScanGeometry:
    angles: tuple[float, ...]
    beamlet_count: int
    beamlet_spacing: float
    detector_offset: float = 0.0

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if not angles:
            raise ValueError("at least one angle is required")
        if any(a < 0 or a >= math.pi for a in angles):
            raise ValueError("angles must lie in [0, pi)")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValueError("angles must be strictly increasing")
        if self.beamlet_count < 1:
            raise ValueError("beamlet_count must be >= 1")
        if not self.beamlet_spacing > 0:
            raise ValueError("beamlet_spacing must be positive")

    @property
    def m(self) -> int:
        return len(self.angles) * self.beamlet_count

    def offsets(self) -> np.ndarray:
        """Signed detector coordinate of every beamlet, centered on the offset."""
        idx = np.arange(self.beamlet_count) - (self.beamlet_count - 1) / 2
        return self.detector_offset + idx * self.beamlet_spacing


def default_geometry(grid: PixelGrid, n_angles: int,
                     beamlet_count: int | None = None) -> ScanGeometry:
    """Equally spaced angles in [0, pi) and ``ceil(sqrt(2n))`` beamlets over the diagonal."""
    if beamlet_count is None:
        beamlet_count = math.ceil(math.sqrt(2 * grid.n))
    angles = tuple(np.arange(n_angles) * (math.pi / n_angles))
    return ScanGeometry(angles, beamlet_count, grid.diagonal / beamlet_count)


def _trace_ray(grid: PixelGrid, theta: float, s: float):
    """Siddon traversal of one line; returns (pixel indices, lengths)."""
    xmin, xmax, ymin, ymax = grid.bounds()
    ox, oy = grid.origin
    nx, ny = math.cos(theta), math.sin(theta)
    dx, dy = -ny, nx
    px, py = ox + s * nx, oy + s * ny

    lo, hi = -math.inf, math.inf
    for p, d, a, b in ((px, dx, xmin, xmax), (py, dy, ymin, ymax)):
        if abs(d) < 1e-15:
            if p < a or p > b:
                return None
            continue
        t0, t1 = (a - p) / d, (b - p) / d
        if t0 > t1:
            t0, t1 = t1, t0
        lo, hi = max(lo, t0), min(hi, t1)
    if hi - lo <= MIN_LENGTH:
        return None

    ps = grid.pixel_size
    cuts = [np.array([lo, hi])]
    if abs(dx) >= 1e-15:
        xs = xmin + ps * np.arange(grid.cols + 1)
        cuts.append((xs - px) / dx)
    if abs(dy) >= 1e-15:
        ys = ymin + ps * np.arange(grid.rows + 1)
        cuts.append((ys - py) / dy)
    t = np.concatenate(cuts)
    t = np.unique(t[(t >= lo) & (t <= hi)])
    lengths = np.diff(t)
    mid = 0.5 * (t[:-1] + t[1:])
    keep = lengths > MIN_LENGTH
    lengths, mid = lengths[keep], mid[keep]

    col = np.floor((px + mid * dx - xmin) / ps).astype(np.int64)
    row = np.floor((ymax - (py + mid * dy)) / ps).astype(np.int64)
    np.clip(col, 0, grid.cols - 1, out=col)
    np.clip(row, 0, grid.rows - 1, out=row)
    return row * grid.cols + col, lengths


class RadonOperator:
    """Sparse intersection-length matrix ``A`` (rows: angle-major beamlets, cols: pixels).

    Immutable after construction.  Both products run scipy's sequential CSR
    kernel, so results are reproducible bit for bit.
    """

    def __init__(self, matrix: sp.spmatrix, grid: PixelGrid | None = None,
                 geometry: ScanGeometry | None = None):
        mat = sp.csr_matrix(matrix, dtype=np.float64)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        mat.data.flags.writeable = False
        self.matrix = mat
        self._matrix_t = mat.T.tocsr()
        self._matrix_t.sort_indices()
        self.grid = grid
        self.geometry = geometry

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return self.matrix @ x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError(f"expected a vector of length {self.m}, got shape {y.shape}")
        return self._matrix_t @ y

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


def build_radon(grid: PixelGrid, geometry: ScanGeometry) -> RadonOperator:
    """Exact ray-pixel intersection lengths for every beamlet of ``geometry``."""
    offsets = geometry.offsets()
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for theta in geometry.angles:
        for s in offsets:
            hit = _trace_ray(grid, theta, float(s))
            if hit is not None:
                cols, lengths = hit
                order = np.argsort(cols, kind="stable")
                cols, lengths = cols[order], lengths[order]
                # a pixel can be split across two segments when cuts nearly coincide
                uniq, start = np.unique(cols, return_index=True)
                lengths = np.add.reduceat(lengths, start)
                indices.append(uniq)
                data.append(lengths)
                indptr.append(indptr[-1] + len(uniq))
            else:
                indptr.append(indptr[-1])
    idx = np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64)
    val = np.concatenate(data) if data else np.zeros(0)
    mat = sp.csr_matrix((val, idx, np.asarray(indptr)), shape=(geometry.m, grid.n))
    return RadonOperator(mat, grid, geometry)


class CouplingOperator:
    """Matrix-free ``D w = w_N - sum_i c_i w_i`` on block vectors of shape ``(N, n)``."""

    def __init__(self, weights: Sequence[float], block_length: int):
        c = np.asarray(weights, dtype=np.float64).reshape(-1)
        if c.size < 1:
            raise ValueError("need at least one coupling weight")
        if np.any(c < 0):
            raise ValueError("coupling weights must be nonnegative")
        total = float(c.sum())
        if not 0 < total <= 1 + 1e-12:
            raise ValueError(f"sum of coupling weights must lie in (0, 1], got {total}")
        if block_length < 1:
            raise ValueError("block_length must be >= 1")
        c.flags.writeable = False
        self.weights = c
        self.block_length = int(block_length)

    @property
    def block_count(self) -> int:
        return self.weights.size + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.block_length, self.block_count * self.block_length

    def _check_blocks(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.block_count, self.block_length):
            raise ValueError(f"expected blocks of shape {(self.block_count, self.block_length)}, "
                             f"got {w.shape}")
        return w

    def combine(self, w: np.ndarray) -> np.ndarray:
        """``sum_{i<N} c_i w_i`` accumulated in agent order."""
        w = self._check_blocks(w)
        acc = self.weights[0] * w[0]
        for ci, wi in zip(self.weights[1:], w[1:-1]):
            acc = acc + ci * wi
        return acc

    def apply(self, w: np.ndarray) -> np.ndarray:
        w = self._check_blocks(w)
        return w[-1] - self.combine(w)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.block_length,):
            raise ValueError(f"expected a vector of length {self.block_length}, got {r.shape}")
        out = np.empty((self.block_count, self.block_length))
        out[:-1] = -self.weights[:, None] * r[None, :]
        out[-1] = r
        return out

    def norm_sq(self) -> float:
        """``lambda_max(D^T D) = sum c_i^2 + 1`` (``D D^T`` is a multiple of the identity)."""
        return float(np.dot(self.weights, self.weights)) + 1.0

    def to_dense(self) -> np.ndarray:
        n = self.block_length
        blocks = [-ci * np.eye(n) for ci in self.weights] + [np.eye(n)]
        return np.hstack(blocks)


def _operator_pair(op):
    if hasattr(op, "forward") and hasattr(op, "adjoint"):
        return op.forward, op.adjoint, op.n
    mat = sp.csr_matrix(op) if sp.issparse(op) else np.asarray(op, dtype=np.float64)
    mat_t = mat.T.tocsr() if sp.issparse(mat) else mat.T
    return (lambda x: mat @ x), (lambda y: mat_t @ y), mat.shape[1]


def spectral_norm_sq(A, tol: float = 1e-6, max_iter: int = 5000, seed: int = 0) -> float:
    """Estimate ``lambda_max(A^T A)`` by power iteration from a seeded random start.

    Stops once the relative change of the Rayleigh quotient is at most ``tol``.
    Hitting ``max_iter`` first emits a :class:`ConvergenceWarning`; the last
    estimate is still returned.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    fwd, adj, n = _operator_pair(A)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = adj(fwd(x))
        new = float(np.dot(x, y))
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise ValueError("operator is zero on the start vector; lambda_max undefined")
        x = y / norm
        if lam > 0 and abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    warnings.warn(f"power iteration did not reach tol={tol} in {max_iter} iterations",
                  ConvergenceWarning, stacklevel=2)
    return lam


def write_triplets(A: RadonOperator, path: str | Path) -> None:
    rows, cols, vals = A.triplets()
    with open(path, "w") as fh:
        fh.write(f"radon {A.m} {A.n} {A.nnz}\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path: str | Path) -> RadonOperator:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "radon":
            raise ValueError(f"{path}: not a radon triplet file")
        m, n, nnz = (int(h) for h in header[1:])
        body = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if body.shape[0] != nnz:
        raise ValueError(f"{path}: header announces {nnz} entries, found {body.shape[0]}")
    mat = sp.csr_matrix((body[:, 2], (body[:, 0].astype(np.int64), body[:, 1].astype(np.int64))),
                        shape=(m, n))
    return RadonOperator(mat)
