import numpy as np
import pytest

from firmtomo.operators import CouplingOperator, PixelGrid, build_radon, default_geometry
from firmtomo.phantoms import (discrepancy_threshold, ground_truth_from_images, log_transform,
                               make_ground_truth, rasterize, simulate, xrf_phantoms)


@pytest.fixture(scope="module")
def setup():
    grid = PixelGrid(32, 32, 1 / 32)
    A = build_radon(grid, default_geometry(grid, 12))
    return grid, A, make_ground_truth(grid)


def test_truth_is_feasible(setup):
    grid, _, gt = setup
    x = np.vstack(gt.xrf_images)
    np.testing.assert_array_equal(gt.xrt_image, 0.1 * x[0] + 0.6 * x[1] + 0.3 * x[2])
    assert np.all(gt.stacked >= 0)
    D = CouplingOperator(gt.weights, grid.n)
    assert np.all(D.apply(gt.stacked) == 0)


def test_variants_differ_and_are_seeded(setup):
    grid = setup[0]
    imgs = [rasterize(p) for p in xrf_phantoms(grid, 3)]
    assert not np.array_equal(imgs[0], imgs[1])
    again = [rasterize(p) for p in xrf_phantoms(grid, 3)]
    for a, b in zip(imgs, again):
        np.testing.assert_array_equal(a, b)


def test_ground_truth_needs_right_image_count():
    grid = PixelGrid(4, 4)
    with pytest.raises(ValueError):
        ground_truth_from_images([np.zeros(16)], [0.1, 0.6, 0.3], grid)


def test_noiseless_data_are_consistent(setup):
    _, A, gt = setup
    data = simulate(gt, A)
    D = CouplingOperator(gt.weights, A.m)
    assert np.all(D.apply(data.clean) == 0)
    np.testing.assert_array_equal(data.measurements, data.clean)
    # the log-transformed transmission equals the forward projection of the XRT image
    np.testing.assert_allclose(log_transform(data.transmission, 1.0), A.forward(gt.xrt_image),
                               atol=1e-12)
    np.testing.assert_allclose(data.clean[-1], A.forward(gt.xrt_image), atol=1e-12)


def test_noise_is_seeded_and_scaled(setup):
    _, A, gt = setup
    a = simulate(gt, A, s=0.05, seed=7, trial_index=2)
    b = simulate(gt, A, s=0.05, seed=7, trial_index=2)
    c = simulate(gt, A, s=0.05, seed=7, trial_index=3)
    np.testing.assert_array_equal(a.measurements, b.measurements)
    assert not np.array_equal(a.measurements, c.measurements)
    np.testing.assert_allclose(a.noise_stds, 0.05 * a.clean.max(axis=1))
    z = (a.measurements - a.clean) / a.noise_stds[:, None]
    assert abs(z.std() - 1) < 0.05


def test_absolute_and_pre_log_noise(setup):
    _, A, gt = setup
    d = simulate(gt, A, s=0.01, relative_noise=False)
    np.testing.assert_allclose(d.noise_stds, 0.01)
    p = simulate(gt, A, I0=10.0, s=0.01, pre_log_noise=True)
    assert np.all(np.isfinite(p.measurements))
    np.testing.assert_array_equal(p.measurements[:-1], simulate(gt, A, I0=10.0, s=0.01).measurements[:-1])


def test_simulate_validation(setup):
    _, A, gt = setup
    with pytest.raises(ValueError):
        simulate(gt, A, s=-1)
    with pytest.raises(ValueError):
        simulate(gt, A, I0=0)


def test_discrepancy_threshold():
    b = np.array([1.0, 3.0, 2.0, 0.5])
    assert discrepancy_threshold(b, 0.1) == pytest.approx(3.0 * 2.0 * 0.1)
    with pytest.raises(ValueError):
        discrepancy_threshold(np.array([]), 0.1)
