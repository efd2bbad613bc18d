"""Reference solvers kept independent of the package's own code paths."""

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_weighted_l1(A, y, w):
    """``min sum w|z| s.t. A z = y`` via the split ``z = z+ - z-`` and HiGHS.

    Returns ``(objective, z)``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    res = linprog(
        np.r_[w, w], A_eq=np.c_[A, -A], b_eq=y, bounds=(0, None), method="highs"
    )
    assert res.status == 0, res.message
    return res.fun, res.x[:n] - res.x[n:]


def vertex_enumeration(A, y, w, tol=1e-9):
    """Brute-force the same LP by visiting every basic feasible solution.

    Only usable for tiny problems (``C(2n, m)`` bases).
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    big = np.c_[A, -A]
    cost = np.r_[w, w]
    best = (np.inf, None)
    for cols in itertools.combinations(range(2 * n), m):
        B = big[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, y)
        if np.any(xb < -tol):
            continue
        obj = cost[list(cols)] @ xb
        if obj < best[0]:
            x = np.zeros(2 * n)
            x[list(cols)] = xb
            best = (obj, x[:n] - x[n:])
    return best
