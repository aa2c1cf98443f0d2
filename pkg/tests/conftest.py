import numpy as np
import pytest
import scipy.sparse as sp

from firmtomo.operators import PixelGrid, RadonOperator, build_radon, default_geometry, spectral_norm_sq
from firmtomo.phantoms import make_ground_truth, simulate
from firmtomo.problem import MultimodalProblem


def random_weights(rng, N):
    """Nonnegative coupling weights with sum in (0, 1]."""
    c = rng.uniform(0.05, 1.0, N - 1)
    return c / c.sum() * rng.uniform(0.3, 1.0)


def random_problem(rng, N=3, n=6, m=None, consistent=False, density=1.0):
    m = m or n + 2
    M = rng.uniform(0.0, 1.0, (m, n))
    if density < 1:
        M *= rng.random((m, n)) < density
    A = RadonOperator(sp.csr_matrix(M))
    c = random_weights(rng, N)
    if consistent:
        w = rng.uniform(0, 1, (N, n))
        w[-1] = c @ w[:-1]
        b = np.vstack([A.forward(wi) for wi in w])
    else:
        b = rng.uniform(0, 2, (N, m))
    return MultimodalProblem(A, b, c)


@pytest.fixture(scope="session")
def desk():
    """64x64 grid over 1 cm, 25 angles, noiseless data."""
    grid = PixelGrid(64, 64, 1 / 64)
    A = build_radon(grid, default_geometry(grid, 25))
    gt = make_ground_truth(grid)
    data = simulate(gt, A)
    return {"grid": grid, "A": A, "truth": gt, "data": data,
            "problem": MultimodalProblem.from_dataset(data), "lambda_max": spectral_norm_sq(A)}


@pytest.fixture(scope="session")
def small():
    """24x24 grid, 10 angles: a fast stand-in for desk-scale behaviour."""
    grid = PixelGrid(24, 24, 1 / 24)
    A = build_radon(grid, default_geometry(grid, 10))
    gt = make_ground_truth(grid)
    return {"grid": grid, "A": A, "truth": gt, "lambda_max": spectral_norm_sq(A)}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
