"""Dense reference implementations used only by the tests."""

import itertools

import numpy as np


def dense_coupling(c, n):
    c = np.asarray(c, dtype=np.float64)
    N = len(c) + 1
    D = np.zeros((n, N * n))
    for i, ci in enumerate(c):
        D[:, i * n:(i + 1) * n] = -ci * np.eye(n)
    D[:, (N - 1) * n:] = np.eye(n)
    return D


def dense_penalty_gradient(A, b, c, w, eta):
    """Gradient of the penalized objective assembled from explicit block matrices."""
    A = np.asarray(A)
    N, n = w.shape
    D = dense_coupling(c, n)
    Ablk = np.kron(np.eye(N), A)
    bvec = np.asarray(b).reshape(-1)
    Db = dense_coupling(c, A.shape[0]) @ bvec
    x = w.reshape(-1)
    g = 2 * Ablk.T @ (Ablk @ x - bvec)
    g -= D.T @ (A.T @ (A @ (D @ x) - Db))
    g += D.T @ (D @ x) / (2 * eta)
    return g.reshape(N, n)


def dense_penalty_hessian(A, c, n, eta):
    N = len(c) + 1
    D = dense_coupling(c, n)
    Ablk = np.kron(np.eye(N), A)
    return 2 * Ablk.T @ Ablk - D.T @ A.T @ A @ D + D.T @ D / (2 * eta)


def kkt_projection(c, v, tol=1e-10):
    """Exhaustive active-set search for argmin ||w - v|| over {w >= 0, Dw = 0}.

    For each candidate zero set Z the equality-constrained KKT system is solved;
    the first candidate that is primal feasible with nonnegative multipliers is
    the (unique) projection.  Smaller zero sets are tried first.
    """
    N, n = v.shape
    D = dense_coupling(c, n)
    x0 = v.reshape(-1)
    size = N * n
    for k in range(size + 1):
        for Z in itertools.combinations(range(size), k):
            E = np.zeros((k, size))
            E[np.arange(k), list(Z)] = 1.0
            K = np.block([[np.eye(size), D.T, -E.T],
                          [D, np.zeros((n, n)), np.zeros((n, k))],
                          [E, np.zeros((k, n)), np.zeros((k, k))]])
            rhs = np.concatenate([x0, np.zeros(n + k)])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.linalg.norm(K @ sol - rhs) > 1e-8 * (1 + np.linalg.norm(rhs)):
                continue
            w, nu = sol[:size], sol[size + n:]
            if w.min() >= -tol and (k == 0 or nu.min() >= -tol):
                return np.maximum(w, 0).reshape(N, n)
    raise RuntimeError("no KKT point found")
