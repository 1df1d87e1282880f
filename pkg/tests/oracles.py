"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def lp_bfs_optimum(mu, c):
    """Best objective over all basic feasible solutions of the assignment LP.

    Standard form: rows ``sum_j x_ij = 1`` and ``x . mu_k + s_k = c_k`` with
    ``x, s >= 0``. Every basis of ``n + K`` columns is tried; returns
    ``(objective, x)`` or ``(None, None)`` when no basis is feasible.
    """
    mu = np.asarray(mu, dtype=float)
    K1, n, J = mu.shape
    K = K1 - 1
    nx = n * J
    A = np.zeros((n + K, nx + K))
    for i in range(n):
        A[i, i * J:(i + 1) * J] = 1.0
    A[n:, :nx] = mu[1:].reshape(K, nx)
    A[n:, nx:] = np.eye(K)
    b = np.concatenate([np.ones(n), np.asarray(c, dtype=float)])
    cost = np.concatenate([mu[0].ravel(), np.zeros(K)])
    m = n + K
    best, best_x = None, None
    for cols in itertools.combinations(range(nx + K), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        xb = np.linalg.solve(B, b)
        if np.any(xb < -1e-9):
            continue
        z = np.zeros(nx + K)
        z[list(cols)] = xb
        val = cost @ z
        if best is None or val > best + 1e-12:
            best, best_x = val, z[:nx].reshape(n, J)
    return best, best_x


def simplex_grid(J, steps):
    """All points of the probability simplex with coordinates in multiples of 1/steps."""
    pts = [np.array(p) / steps for p in itertools.product(range(steps + 1), repeat=J - 1)
           if sum(p) <= steps]
    return np.array([np.append(p, 1 - p.sum()) for p in pts])


def grid_projection(y, w, steps=200):
    """Brute-force weighted projection onto the simplex by grid search."""
    G = simplex_grid(len(y), steps)
    vals = ((G - y) ** 2 * w).sum(axis=1)
    i = int(np.argmin(vals))
    return G[i], vals[i]


def random_lp(rng, n_max=5, J_max=4, K_max=2, J_min=2):
    n = int(rng.integers(1, n_max + 1))
    J = int(rng.integers(J_min, J_max + 1))
    K = int(rng.integers(0, K_max + 1))
    mu = rng.normal(size=(K + 1, n, J))
    # thresholds just above the uniform policy's values keep the instance feasible
    c = np.einsum("kij->k", mu[1:]) / J + np.abs(rng.normal(scale=0.5, size=K))
    return mu, c


def separated_instance():
    """Three cohorts, three arms, one guardrail; the true optimum is unique."""
    mu = np.array([
        [[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.2, 0.0, 1.0]],
        [[0.5, -0.5, 0.0], [0.3, 0.3, -0.6], [0.0, 0.4, -0.4]],
    ])
    return mu, np.array([0.3])
