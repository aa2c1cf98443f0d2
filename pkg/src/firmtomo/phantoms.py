"""Ground-truth phantoms and synthetic XRF/XRT measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import CouplingOperator, PixelGrid, RadonOperator

DEFAULT_WEIGHTS = (0.1, 0.6, 0.3)

# Modified Shepp-Logan table: (x0, y0, a, b, phi_degrees, intensity), unit-disc coordinates.
SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)

# Per-modality remapping of the eight inner-ellipse intensities.  Each XRF
# element concentrates in different structures; the outer shell is shared.
_INNER_LEVELS = (-0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.6)
_VARIANT_SCALE = (1.0, 0.8, 1.25)


@dataclass(frozen=True)
class Ellipse:
    x0: float
    y0: float
    a: float
    b: float
    phi: float  # radians, counter-clockwise
    intensity: float

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx, dy = x - self.x0, y - self.y0
        cp, sp_ = math.cos(self.phi), math.sin(self.phi)
        u = dx * cp + dy * sp_
        v = -dx * sp_ + dy * cp
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


@dataclass(frozen=True)
class EllipsePhantom:
    """Ellipses in physical coordinates (cm) over ``grid``."""

    ellipses: tuple[Ellipse, ...]
    grid: PixelGrid

    @classmethod
    def from_table(cls, grid: PixelGrid, table, intensities=None) -> "EllipsePhantom":
        """Scale a unit-disc table to the grid's half-extent."""
        half_w, half_h = grid.width / 2, grid.height / 2
        ox, oy = grid.origin
        if intensities is None:
            intensities = [row[5] for row in table]
        ellipses = tuple(
            Ellipse(ox + x0 * half_w, oy + y0 * half_h, a * half_w, b * half_h,
                    math.radians(phi), float(val))
            for (x0, y0, a, b, phi, _), val in zip(table, intensities))
        return cls(ellipses, grid)


def rasterize(phantom: EllipsePhantom) -> np.ndarray:
    """Sum intensities of ellipses containing each pixel center, clamped at zero."""
    xs, ys = phantom.grid.pixel_centers()
    img = np.zeros(xs.shape)
    for e in phantom.ellipses:
        img[e.contains(xs, ys)] += e.intensity
    np.maximum(img, 0.0, out=img)
    return img.reshape(-1)


def xrf_phantoms(grid: PixelGrid, count: int = 3, variant_seed: int = 0) -> list[EllipsePhantom]:
    """Shepp-Logan variants with per-modality inner intensities.

    The outer two ellipses keep their classic values; the eight inner ones get a
    seeded permutation of ``_INNER_LEVELS`` per modality, then a modality scale.
    """
    out = []
    for i in range(count):
        rng = np.random.default_rng([variant_seed, i])
        inner = rng.permutation(_INNER_LEVELS)
        scale = _VARIANT_SCALE[i % len(_VARIANT_SCALE)]
        vals = [1.0, -0.8] + list(inner)
        out.append(EllipsePhantom.from_table(grid, SHEPP_LOGAN, [scale * v for v in vals]))
    return out


@dataclass
class GroundTruth:
    xrf_images: list[np.ndarray]
    xrt_image: np.ndarray
    weights: np.ndarray
    grid: PixelGrid

    @property
    def stacked(self) -> np.ndarray:
        """Block vector ``[xrf_1; ...; xrf_{N-1}; xrt]`` as an ``(N, n)`` array."""
        return np.vstack(self.xrf_images + [self.xrt_image])


def ground_truth_from_images(images: Sequence[np.ndarray], weights: Sequence[float],
                             grid: PixelGrid) -> GroundTruth:
    """Attach the XRT image ``sum_i c_i xrf_i`` so the truth satisfies the coupling."""
    imgs = [np.asarray(im, dtype=np.float64).reshape(-1) for im in images]
    D = CouplingOperator(weights, grid.n)
    if len(imgs) != D.block_count - 1:
        raise ValueError(f"need {D.block_count - 1} XRF images, got {len(imgs)}")
    xrt = D.combine(np.vstack(imgs + [np.zeros(grid.n)]))
    return GroundTruth(imgs, xrt, D.weights.copy(), grid)


def make_ground_truth(grid: PixelGrid, weights: Sequence[float] = DEFAULT_WEIGHTS,
                      variant_seed: int = 0) -> GroundTruth:
    phantoms = xrf_phantoms(grid, len(weights), variant_seed)
    return ground_truth_from_images([rasterize(p) for p in phantoms], weights, grid)


@dataclass
class MultimodalDataset:
    """Per-agent measurement vectors ``b_1..b_N`` (``b_N`` already log-transformed)."""

    A: RadonOperator
    measurements: np.ndarray  # (N, m)
    clean: np.ndarray  # (N, m) noise-free counterparts
    transmission: np.ndarray  # raw XRT counts b_XRT
    weights: np.ndarray
    noise_level: float
    incident_energy: float
    seed: int
    trial_index: int
    noise_stds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def m(self) -> int:
        return self.measurements.shape[1]


def log_transform(b_xrt: np.ndarray, I0: float) -> np.ndarray:
    """``-log(b_XRT / I0)``, linearizing the Beer-Lambert model."""
    return -np.log(np.asarray(b_xrt) / I0)


def noise_rng(seed: int, trial_index: int, modality: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial_index), int(modality)])


def simulate(gt: GroundTruth, A: RadonOperator, I0: float = 1.0, s: float = 0.0,
             seed: int = 0, trial_index: int = 0, relative_noise: bool = True,
             pre_log_noise: bool = False) -> MultimodalDataset:
    """Forward-project the truth and add seeded Gaussian noise.

    With ``relative_noise`` the per-modality standard deviation is
    ``s * max(b_clean)``; otherwise it is ``s``.  Noise goes on the
    post-log vectors unless ``pre_log_noise`` is set, in which case the XRT
    counts are perturbed and clamped to ``1e-12 * I0`` before the log.
    """
    if s < 0:
        raise ValueError("noise level must be nonnegative")
    if not I0 > 0:
        raise ValueError("incident energy must be positive")
    D = CouplingOperator(gt.weights, A.m)
    xrf = [A.forward(img) for img in gt.xrf_images]
    transmission = I0 * np.exp(-A.forward(gt.xrt_image))
    # A is linear, so the noise-free log data equal the coupled XRF sinograms;
    # forming them this way keeps D b_clean = 0 bit for bit.
    clean = np.vstack(xrf + [np.zeros(A.m)])
    clean[-1] = D.combine(clean)

    noisy = clean.copy()
    stds = np.zeros(len(clean))
    if s > 0:
        for i in range(len(clean)):
            z = noise_rng(seed, trial_index, i).standard_normal(A.m)
            if pre_log_noise and i == len(clean) - 1:
                stds[i] = s * (transmission.max() if relative_noise else 1.0)
                counts = np.maximum(transmission + stds[i] * z, 1e-12 * I0)
                noisy[i] = log_transform(counts, I0)
                continue
            stds[i] = s * (clean[i].max() if relative_noise else 1.0)
            noisy[i] = clean[i] + stds[i] * z
    return MultimodalDataset(A, noisy, clean, transmission, D.weights.copy(), float(s),
                             float(I0), int(seed), int(trial_index), stds)


def discrepancy_threshold(b: np.ndarray, s: float) -> float:
    """Expected noise norm ``max(b) * sqrt(m) * s`` used by the discrepancy principle."""
    b = np.asarray(b)
    if b.size == 0:
        raise ValueError("empty measurement vector")
    if s < 0:
        raise ValueError("noise level must be nonnegative")
    return float(b.max()) * math.sqrt(b.size) * s
