import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from firmtomo.operators import (ConvergenceWarning, CouplingOperator, PixelGrid, RadonOperator,
                                ScanGeometry, build_radon, default_geometry, read_triplets,
                                spectral_norm_sq, write_triplets)


def clip_length(p, d, box):
    """Length of the line p + t d inside an axis-aligned box (Liang-Barsky)."""
    lo, hi = -math.inf, math.inf
    for k in range(2):
        a, b = box[2 * k], box[2 * k + 1]
        if abs(d[k]) < 1e-15:
            if not a <= p[k] <= b:
                return 0.0
            continue
        t0, t1 = sorted(((a - p[k]) / d[k], (b - p[k]) / d[k]))
        lo, hi = max(lo, t0), min(hi, t1)
    return max(hi - lo, 0.0)


def brute_force_matrix(grid, geom):
    """Clip every ray against every pixel square independently."""
    xmin, _, _, ymax = grid.bounds()
    ps = grid.pixel_size
    out = np.zeros((geom.m, grid.n))
    row = 0
    for theta in geom.angles:
        normal = (math.cos(theta), math.sin(theta))
        d = (-normal[1], normal[0])
        for s in geom.offsets():
            p = (s * normal[0], s * normal[1])
            for r in range(grid.rows):
                for c in range(grid.cols):
                    box = (xmin + c * ps, xmin + (c + 1) * ps, ymax - (r + 1) * ps, ymax - r * ps)
                    out[row, r * grid.cols + c] = clip_length(p, d, box)
            row += 1
    return out


def test_single_pixel_horizontal_ray():
    grid = PixelGrid(1, 1, 2.0)
    A = build_radon(grid, ScanGeometry((math.pi / 2,), 1, 1.0))
    # theta = pi/2: the ray is horizontal through the center
    assert A.to_dense()[0, 0] == pytest.approx(2.0)


def test_ray_outside_grid_is_empty():
    grid = PixelGrid(2, 2, 1.0)
    A = build_radon(grid, ScanGeometry((0.0,), 1, 1.0, detector_offset=5.0))
    assert A.nnz == 0


@pytest.mark.parametrize("shape,angles", [((5, 5), 7), ((4, 6), 5), ((3, 3), 4)])
def test_matches_brute_force_clipping(shape, angles):
    grid = PixelGrid(*shape, 0.37)
    base = default_geometry(grid, angles)
    # shifted off the pixel lattice: a ray running along a shared edge is
    # charged to a single pixel, while clipping would count it in both
    geom = ScanGeometry(base.angles, base.beamlet_count, base.beamlet_spacing, 0.0123)
    A = build_radon(grid, geom)
    np.testing.assert_allclose(A.to_dense(), brute_force_matrix(grid, geom), atol=1e-10)


def test_edge_ray_is_charged_once():
    grid = PixelGrid(2, 2, 1.0)
    A = build_radon(grid, ScanGeometry((0.0,), 1, 1.0))
    # vertical ray on the shared column edge: total length equals the grid height
    assert A.to_dense().sum() == pytest.approx(2.0)


def test_default_geometry_counts():
    grid = PixelGrid(64, 64, 1 / 64)
    g = default_geometry(grid, 25)
    assert g.beamlet_count == math.ceil(math.sqrt(2 * 64 * 64))
    assert g.m == 25 * g.beamlet_count
    assert g.angles[0] == 0.0 and g.angles[-1] < math.pi


def test_row_sums_are_chord_lengths():
    grid = PixelGrid(8, 8, 0.125)
    geom = default_geometry(grid, 6)
    A = build_radon(grid, geom)
    sums = np.asarray(A.matrix.sum(axis=1)).ravel()
    box = grid.bounds()
    expected = []
    for theta in geom.angles:
        nrm = (math.cos(theta), math.sin(theta))
        for s in geom.offsets():
            expected.append(clip_length((s * nrm[0], s * nrm[1]), (-nrm[1], nrm[0]), box))
    np.testing.assert_allclose(sums, expected, atol=1e-12)


def test_adjoint_identity():
    grid = PixelGrid(16, 16, 1 / 16)
    A = build_radon(grid, default_geometry(grid, 9))
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(A.n), rng.standard_normal(A.m)
    assert np.dot(A.forward(x), y) == pytest.approx(np.dot(x, A.adjoint(y)), rel=1e-12)


def test_forward_rejects_wrong_length():
    A = RadonOperator(sp.csr_matrix(np.ones((3, 2))))
    with pytest.raises(ValueError):
        A.forward(np.ones(3))
    with pytest.raises(ValueError):
        A.adjoint(np.ones(2))


def test_geometry_validation():
    with pytest.raises(ValueError):
        ScanGeometry((), 3, 1.0)
    with pytest.raises(ValueError):
        ScanGeometry((0.5, 0.2), 3, 1.0)
    with pytest.raises(ValueError):
        ScanGeometry((0.0,), 0, 1.0)
    with pytest.raises(ValueError):
        PixelGrid(0, 3)


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(3)
    M = rng.uniform(0, 1, (12, 9))
    assert spectral_norm_sq(M, tol=1e-12) == pytest.approx(np.linalg.norm(M, 2) ** 2, rel=1e-8)
    assert spectral_norm_sq(sp.csr_matrix(M), tol=1e-12) == pytest.approx(
        np.linalg.norm(M, 2) ** 2, rel=1e-8)


def test_spectral_norm_radon_and_identity():
    grid = PixelGrid(10, 10, 0.1)
    A = build_radon(grid, default_geometry(grid, 8))
    exact = np.linalg.norm(A.to_dense(), 2) ** 2
    assert spectral_norm_sq(A, tol=1e-10) == pytest.approx(exact, rel=1e-6)
    assert spectral_norm_sq(np.eye(5)) == pytest.approx(1.0)


def test_spectral_norm_errors_and_warning():
    with pytest.raises(ValueError):
        spectral_norm_sq(np.zeros((3, 3)))
    M = np.diag([1.0, 0.999999, 0.5])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        spectral_norm_sq(M, tol=1e-14, max_iter=3)
    assert any(issubclass(w.category, ConvergenceWarning) for w in rec)


def test_triplet_round_trip(tmp_path):
    grid = PixelGrid(6, 6, 1 / 6)
    A = build_radon(grid, default_geometry(grid, 4))
    write_triplets(A, tmp_path / "a.txt")
    B = read_triplets(tmp_path / "a.txt")
    assert B.shape == A.shape
    assert (B.matrix != A.matrix).nnz == 0


# coupling operator

@st.composite
def coupling_case(draw):
    N = draw(st.integers(2, 5))
    n = draw(st.integers(1, 6))
    raw = draw(st.lists(st.floats(0.0, 1.0), min_size=N - 1, max_size=N - 1))
    total = sum(raw)
    if total == 0:
        raw = [1.0] + raw[1:]
        total = 1.0
    scale = draw(st.floats(0.1, 1.0))
    return np.array(raw) / total * scale, n


@settings(max_examples=60, deadline=None)
@given(coupling_case(), st.integers(0, 2**31 - 1))
def test_coupling_matches_dense(case, seed):
    c, n = case
    D = CouplingOperator(c, n)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((D.block_count, n))
    r = rng.standard_normal(n)
    Dd = D.to_dense()
    np.testing.assert_allclose(D.apply(w), Dd @ w.reshape(-1), atol=1e-12)
    np.testing.assert_allclose(D.adjoint(r).reshape(-1), Dd.T @ r, atol=1e-12)
    assert D.norm_sq() == pytest.approx(np.linalg.eigvalsh(Dd @ Dd.T).max(), rel=1e-10)


def test_coupling_validation():
    with pytest.raises(ValueError):
        CouplingOperator([0.6, 0.6], 3)
    with pytest.raises(ValueError):
        CouplingOperator([-0.1, 0.5], 3)
    with pytest.raises(ValueError):
        CouplingOperator([0.0, 0.0], 3)
    D = CouplingOperator([0.1, 0.6, 0.3], 2)
    with pytest.raises(ValueError):
        D.apply(np.zeros((3, 2)))
