import numba
import numpy as np


@numba.njit(cache=True)
def gs_sweep(u, rhs, lo, hi):
    """In-place Gauss-Seidel over rows [lo, hi), natural row-major order.

    ``rhs`` already carries the h**2 factor. Boundary columns are not touched.
    """
    ncols = u.shape[1]
    for i in range(lo, hi):
        for j in range(1, ncols - 1):
            u[i, j] = 0.25 * (u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1] + rhs[i, j])


@numba.njit(cache=True)
def max_abs_diff(u, ref, lo, hi):
    ncols = u.shape[1]
    best = 0.0
    for i in range(lo, hi):
        for j in range(1, ncols - 1):
            d = abs(u[i, j] - ref[i, j])
            if d > best:
                best = d
    return best


def warm() -> None:
    u = np.zeros((3, 3))
    gs_sweep(u, u, 1, 2)
    max_abs_diff(u, u, 1, 2)
