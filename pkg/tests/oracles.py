"""Single-address-space reference results."""
import functools
import operator

import numpy as np

_PY_OPS = {"sum": operator.add, "prod": operator.mul, "max": np.maximum, "min": np.minimum}


def fold(kind, arrays):
    """Left fold in list order, one element-wise step at a time."""
    return functools.reduce(lambda a, b: _PY_OPS[kind](a, b), [np.asarray(a) for a in arrays])


def gather(blocks):
    return np.concatenate([np.asarray(b).reshape(-1) for b in blocks])


def summa_serial(a, b):
    """Naive ikj triple loop."""
    n, k = a.shape
    m = b.shape[1]
    c = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            aip = a[i, p]
            for j in range(m):
                c[i, j] += aip * b[p, j]
    return c


# -- Poisson ------------------------------------------------------------------

import numba  # noqa: E402


@numba.njit(cache=True)
def _block_gs_iteration(u, rhs, starts, stops):
    """One block Gauss-Seidel iteration: every block sweeps its rows in
    natural order and sees its neighbours' boundary rows as they were at the
    start of the iteration."""
    old = u.copy()
    m = u.shape[1]
    for b in range(starts.size):
        lo = starts[b]
        hi = stops[b]
        for i in range(lo, hi):
            for j in range(1, m - 1):
                up = old[i - 1, j] if i == lo else u[i - 1, j]
                down = old[i + 1, j] if i == hi - 1 else u[i + 1, j]
                u[i, j] = 0.25 * (up + down + u[i, j - 1] + u[i, j + 1] + rhs[i, j])
    return old


@numba.njit(cache=True)
def _max_diff(a, b, lo, hi):
    worst = 0.0
    for i in range(lo, hi):
        for j in range(1, a.shape[1] - 1):
            d = abs(a[i, j] - b[i, j])
            if d > worst:
                worst = d
    return worst


def poisson_problem(n):
    """Exact solution sin(pi x) sin(pi y) and h^2 * f on the full grid."""
    h = 1.0 / (n + 1)
    x = np.arange(n + 2) * h
    ue = np.sin(np.pi * x)[:, None] * np.sin(np.pi * x)[None, :]
    ue[0, :] = 0.0
    ue[-1, :] = 0.0
    ue[:, 0] = 0.0
    ue[:, -1] = 0.0
    return ue, (h * h) * (2.0 * np.pi * np.pi) * ue


def poisson_serial(n, bounds, tol, max_iters):
    """Per-iteration max |u - u_exact| until it drops below ``tol``."""
    ue, rhs = poisson_problem(n)
    u = np.zeros_like(ue)
    starts = np.array([b[0] for b in bounds], dtype=np.int64)
    stops = np.array([b[1] for b in bounds], dtype=np.int64)
    history = []
    for _ in range(max_iters):
        _block_gs_iteration(u, rhs, starts, stops)
        history.append(_max_diff(u, ue, 1, n + 1))
        if history[-1] < tol:
            break
    return history, u


def poisson_discretization_error(n, update_tol=1e-14, max_iters=200_000):
    """max |u_h - u_exact| for the converged discrete solution."""
    ue, rhs = poisson_problem(n)
    u = np.zeros_like(ue)
    one = np.array([1], dtype=np.int64)
    last = np.array([n + 1], dtype=np.int64)
    for _ in range(max_iters):
        old = _block_gs_iteration(u, rhs, one, last)
        if _max_diff(u, old, 1, n + 1) < update_tol:
            break
    return _max_diff(u, ue, 1, n + 1)
