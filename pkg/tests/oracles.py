"""Independent reference computations used by the tests (deliberately naive)."""

import numpy as np


def dense_quadratic_form(H, z):
    """0.5 * z' H z by explicit double loop."""
    total = 0.0
    for i in range(len(z)):
        for j in range(len(z)):
            total += z[i] * H[i][j] * z[j]
    return 0.5 * total


def random_spd(rng, d, floor=0.1):
    M = rng.normal(size=(d, d))
    return M @ M.T + floor * np.eye(d)


def random_stabilizable(rng, n, m=1):
    """A random (A, B) pair that is controllable with probability one."""
    A = rng.normal(size=(n, n)) * 0.8
    B = rng.normal(size=(n, m))
    return A, B


def scalar_argmin(fun, lo, hi, points=10_001):
    grid = np.linspace(lo, hi, points)
    vals = np.array([fun(u) for u in grid])
    return grid[np.argmin(vals)], grid[1] - grid[0]


def naci_loop(X, U, V1, V2, N):
    total = 0.0
    for k in range(N):
        for i in range(X.shape[1]):
            total += V1[i][i] * X[k][i] ** 2
        for i in range(U.shape[1]):
            total += V2[i][i] * U[k][i] ** 2
    return total / N
