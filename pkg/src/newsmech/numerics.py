"""Small numerical helpers shared by the solvers."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import isotonic_regression

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(fn, lo, hi, tol=1e-10, max_iter=500):
    """Minimise a unimodal function on ``[lo, hi]``.

    Returns a dict with the minimiser ``x``, value ``fun`` and iteration
    count. Endpoints are evaluated too, so a minimum sitting on the boundary
    of the bracket is found exactly.
    """
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fn(d)
        it += 1
    candidates = [(fc, c), (fd, d), (fn(lo), float(lo)), (fn(hi), float(hi))]
    fun, x = min(candidates, key=lambda pair: (pair[0], pair[1]))
    return {"x": x, "fun": fun, "iterations": it}


def project_nonincreasing_nonneg(y, weights=None):
    """Euclidean projection onto {x : x_0 >= x_1 >= ... >= 0}.

    Antitonic regression by pool-adjacent-violators followed by clipping at
    zero, which is the exact projection onto the intersection.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return y.copy()
    fit = isotonic_regression(y, weights=weights, increasing=False).x
    return np.maximum(fit, 0.0)


def is_nonincreasing(x, tol=0.0):
    return bool(np.all(np.diff(x) <= tol))


def is_nondecreasing(x, tol=0.0):
    return bool(np.all(np.diff(x) >= -tol))
