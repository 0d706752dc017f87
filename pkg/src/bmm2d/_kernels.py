"""Compiled inner loops.

Everything here is a plain function of ndarrays and floats so numba can cache
the compiled code on disk.  The loss family is hard-wired to the package
default; generic-family code paths live in the public modules and fall back to
vectorized numpy.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Loss-family constants: quadratic knee, support edge, saturation level,
# scale-stage target b = saturation/2, and the first-stage narrowing factor.
_KNEE = 2.0
_EDGE = 3.0
_SAT = 3.25
_B = 1.625
_NARROW = 0.405

_SCALE_RTOL = 1e-11
_SCALE_MAX_ITER = 200


@njit(cache=True)
def rho2_scalar(x: float) -> float:
    a = abs(x)
    if a <= _KNEE:
        return 0.5 * a * a
    if a <= _EDGE:
        a2 = a * a
        a4 = a2 * a2
        return 0.002 * a4 * a4 - 0.052 * a4 * a2 + 0.432 * a4 - 0.972 * a2 + 1.792
    return _SAT


@njit(cache=True)
def eta_scalar(x: float) -> float:
    a = abs(x)
    if a <= _KNEE:
        return x
    if a <= _EDGE:
        a2 = a * a
        a3 = a2 * a
        a5 = a3 * a2
        a7 = a5 * a2
        v = 0.016 * a7 - 0.312 * a5 + 1.728 * a3 - 1.944 * a
        return v if x >= 0.0 else -v
    return 0.0


@njit(cache=True)
def rho2_inplace(x: np.ndarray) -> None:
    for i in range(x.size):
        x.flat[i] = rho2_scalar(x.flat[i])


@njit(cache=True)
def _mean_rho1(u: np.ndarray, s: float) -> float:
    # mean of rho2(u / (0.405 s)); callers guarantee s > 0
    inv = 1.0 / (_NARROW * s)
    acc = 0.0
    for i in range(u.size):
        acc += rho2_scalar(u[i] * inv)
    return acc / u.size


@njit(cache=True)
def m_scale_core(u: np.ndarray) -> tuple[float, int, bool]:
    """Solve mean(rho1(u/s)) = b for s by bisection.

    Returns (s, iterations, converged).  All-zero input gives (0, 0, True);
    at least half zeros gives the breakdown signal (0, 0, False).
    """
    n = u.size
    zeros = 0
    amax = 0.0
    for i in range(n):
        a = abs(u[i])
        if a == 0.0:
            zeros += 1
        elif a > amax:
            amax = a
    if zeros == n:
        return 0.0, 0, True
    if 2 * zeros >= n:
        return 0.0, 0, False

    med = np.median(u)
    mad = np.median(np.abs(u - med))
    lo = 1e-12 * 1.4826 * mad
    # at hi every |u/s| <= 0.5 so every rho1 term is below b: valid upper bracket
    hi = 2.0 * amax
    if _mean_rho1(u, hi) > _B:
        # cannot happen analytically; defensive expansion
        while _mean_rho1(u, hi) > _B:
            hi *= 2.0
    iters = 0
    s = 0.5 * (lo + hi)
    while iters < _SCALE_MAX_ITER:
        s = 0.5 * (lo + hi)
        g = _mean_rho1(u, s)
        iters += 1
        if g > _B:
            lo = s
        elif g < _B:
            hi = s
        else:
            break
        if hi - lo <= _SCALE_RTOL * s:
            break
    s = 0.5 * (lo + hi)
    converged = abs(_mean_rho1(u, s) - _B) <= 1e-9
    return s, iters, converged


@njit(cache=True)
def ar_residuals_core(y: np.ndarray, p1: float, p2: float, p3: float) -> np.ndarray:
    rows, cols = y.shape
    out = np.empty((rows - 1, cols - 1))
    for i in range(1, rows):
        for j in range(1, cols):
            out[i - 1, j - 1] = (
                y[i, j] - p1 * y[i - 1, j] - p2 * y[i, j - 1] - p3 * y[i - 1, j - 1]
            )
    return out


@njit(cache=True)
def bip_residuals_core(
    y: np.ndarray, p1: float, p2: float, p3: float, sigma: float
) -> np.ndarray:
    """Bounded-propagation residual recursion, raster order, zero first row/col.

    Uses the cleaned-value form: c = y + sigma*eta(e/sigma) - e, and
    e[i,j] = y[i,j] - p1*c[i-1,j] - p2*c[i,j-1] - p3*c[i-1,j-1].
    """
    rows, cols = y.shape
    c = np.empty((rows, cols))
    out = np.empty((rows - 1, cols - 1))
    inv = 1.0 / sigma
    for j in range(cols):
        c[0, j] = y[0, j]  # boundary residual is 0, so the cleaned value is y
    for i in range(1, rows):
        c[i, 0] = y[i, 0]
        for j in range(1, cols):
            e = y[i, j] - p1 * c[i - 1, j] - p2 * c[i, j - 1] - p3 * c[i - 1, j - 1]
            c[i, j] = y[i, j] + sigma * eta_scalar(e * inv) - e
            out[i - 1, j - 1] = e
    return out


@njit(cache=True)
def scale_objective_ar(y: np.ndarray, p1: float, p2: float, p3: float) -> float:
    u = ar_residuals_core(y, p1, p2, p3).ravel()
    s, _, ok = m_scale_core(u)
    if not ok:
        return math.inf
    return s


@njit(cache=True)
def scale_objective_bip(
    y: np.ndarray, p1: float, p2: float, p3: float, sigma: float
) -> float:
    u = bip_residuals_core(y, p1, p2, p3, sigma).ravel()
    s, _, ok = m_scale_core(u)
    if not ok:
        return math.inf
    return s


@njit(cache=True)
def mean_rho2_ar(y: np.ndarray, p1: float, p2: float, p3: float, s: float) -> float:
    rows, cols = y.shape
    inv = 1.0 / s
    acc = 0.0
    for i in range(1, rows):
        for j in range(1, cols):
            e = y[i, j] - p1 * y[i - 1, j] - p2 * y[i, j - 1] - p3 * y[i - 1, j - 1]
            acc += rho2_scalar(e * inv)
    return acc / ((rows - 1) * (cols - 1))


@njit(cache=True)
def mean_rho2_bip(
    y: np.ndarray, p1: float, p2: float, p3: float, sigma: float, s: float
) -> float:
    u = bip_residuals_core(y, p1, p2, p3, sigma).ravel()
    inv = 1.0 / s
    acc = 0.0
    for i in range(u.size):
        acc += rho2_scalar(u[i] * inv)
    return acc / u.size


@njit(cache=True)
def weighted_sum_rho2_ar(
    y: np.ndarray, p1: float, p2: float, p3: float, s: float, w: np.ndarray
) -> float:
    rows, cols = y.shape
    inv = 1.0 / s
    acc = 0.0
    for i in range(1, rows):
        for j in range(1, cols):
            e = y[i, j] - p1 * y[i - 1, j] - p2 * y[i, j - 1] - p3 * y[i - 1, j - 1]
            acc += w[i - 1, j - 1] * rho2_scalar(e * inv)
    return acc


@njit(cache=True)
def simulate_recursion(eps: np.ndarray, p1: float, p2: float, p3: float) -> np.ndarray:
    """Run the AR recursion over eps in place, zero boundary outside the lattice."""
    rows, cols = eps.shape
    y = eps  # overwritten row by row; neighbors already updated
    for i in range(rows):
        for j in range(cols):
            acc = y[i, j]
            if i > 0:
                acc += p1 * y[i - 1, j]
                if j > 0:
                    acc += p3 * y[i - 1, j - 1]
            if j > 0:
                acc += p2 * y[i, j - 1]
            y[i, j] = acc
    return y
