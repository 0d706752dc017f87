"""Bounded loss family, robust scale, and the bounded-propagation residuals.

The loss rho2 is quadratic up to |x| = 2, an even octic spline on 2 < |x| <= 3,
and saturates at 3.25 beyond; rho1 is the same curve narrowed by the factor
0.405 so that the scale equation mean(rho1(u/s)) = b, b = max(rho2)/2 = 1.625,
is solved near the standard deviation for Gaussian data.  eta is the
derivative of rho2: the identity near zero, tapering to zero at |x| = 3, so a
single large innovation cannot propagate through the field recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DomainError
from .grid import ArParams, DEFAULT_MAX_ORDER, Grid2D, require_feasible

NARROWING = 0.405  # first-stage loss is rho2(x / NARROWING)
B_TARGET = 1.625  # max(rho2) / 2: scale-equation target, 50% breakdown

_SCALE_RTOL = 1e-11
_SCALE_MAX_ITER = 200


def rho2(x):
    """Bounded second-stage loss; accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    a2 = a * a
    a4 = a2 * a2
    octic = 0.002 * a4 * a4 - 0.052 * a4 * a2 + 0.432 * a4 - 0.972 * a2 + 1.792
    out = np.where(a <= 2.0, 0.5 * a2, np.where(a <= 3.0, octic, 3.25))
    return out if out.ndim else float(out)


def rho1(x):
    """First-stage loss: rho2 narrowed by the 0.405 tuning constant."""
    return rho2(np.asarray(x, dtype=np.float64) / NARROWING)


def eta(x):
    """Derivative of rho2: odd, bounded, identity on [-2, 2], zero beyond 3."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    a2 = a * a
    a3 = a2 * a
    septic = 0.016 * a3 * a3 * a - 0.312 * a3 * a2 + 1.728 * a3 - 1.944 * a
    mag = np.where(a <= 2.0, a, np.where(a <= 3.0, septic, 0.0))
    out = np.sign(x) * mag
    return out if out.ndim else float(out)


def psi_huber(x):
    """Huber influence clipped at 1.5."""
    x = np.asarray(x, dtype=np.float64)
    out = np.clip(x, -1.5, 1.5)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RhoFamily:
    rho2: Callable
    rho1: Callable
    eta: Callable
    psi_huber: Callable
    b: float


DEFAULT_FAMILY = RhoFamily(rho2=rho2, rho1=rho1, eta=eta, psi_huber=psi_huber, b=B_TARGET)


@dataclass(frozen=True)
class ScaleEstimate:
    s: float
    iterations: int
    converged: bool


def m_scale(u, family: RhoFamily = DEFAULT_FAMILY) -> ScaleEstimate:
    """Robust scale: the s > 0 solving mean(rho1(u/s)) = b, by bisection.

    All-zero input returns s = 0 converged; when at least half the entries are
    exactly zero the equation may have no positive root and s = 0 is returned
    with converged = False (breakdown signal).
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.size == 0:
        raise DomainError("m_scale needs a non-empty vector")
    if family is DEFAULT_FAMILY:
        s, iters, ok = _kernels.m_scale_core(u)
        return ScaleEstimate(float(s), int(iters), bool(ok))
    return _m_scale_generic(u, family)


def _m_scale_generic(u: np.ndarray, family: RhoFamily) -> ScaleEstimate:
    n = u.size
    zeros = int(np.count_nonzero(u == 0.0))
    if zeros == n:
        return ScaleEstimate(0.0, 0, True)
    if 2 * zeros >= n:
        return ScaleEstimate(0.0, 0, False)
    b = family.b

    def g(s):
        return float(np.mean(family.rho1(u / s)))

    med = np.median(u)
    mad = np.median(np.abs(u - med))
    lo = 1e-12 * 1.4826 * mad
    hi = 2.0 * float(np.max(np.abs(u)))
    while g(hi) > b:
        hi *= 2.0
    iters = 0
    s = 0.5 * (lo + hi)
    while iters < _SCALE_MAX_ITER:
        s = 0.5 * (lo + hi)
        val = g(s)
        iters += 1
        if val > b:
            lo = s
        elif val < b:
            hi = s
        else:
            break
        if hi - lo <= _SCALE_RTOL * s:
            break
    s = 0.5 * (lo + hi)
    return ScaleEstimate(s, iters, abs(g(s) - b) <= 1e-9)


@lru_cache(maxsize=8)
def kappa_squared(family: RhoFamily = DEFAULT_FAMILY, nodes: int = 4001) -> float:
    """E[eta(Z)^2] for standard normal Z, by composite Simpson on [-8, 8].

    With the default node count the spline junctions of eta fall on panel
    boundaries, so the quadrature keeps its full order; absolute error is
    below 1e-8.
    """
    if nodes < 4001 or nodes % 2 == 0:
        raise DomainError("quadrature needs an odd node count >= 4001")
    z = np.linspace(-8.0, 8.0, nodes)
    h = z[1] - z[0]
    vals = np.asarray(family.eta(z), dtype=np.float64) ** 2
    vals *= np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * np.dot(w, vals))


@lru_cache(maxsize=4)
def _multinomial_sq_table(max_order: int) -> np.ndarray:
    """(max_order+1)^3 table of squared multinomial factors, zero outside the simplex."""
    n = max_order + 1
    t = np.zeros((n, n, n))
    for k in range(n):
        for l in range(n - k):
            for r in range(n - k - l):
                c = math.comb(k + l + r, k) * math.comb(l + r, l)
                t[k, l, r] = float(c) * float(c)
    return t


def _lambda_sq_sum_raw(p1: float, p2: float, p3: float, max_order: int) -> float:
    # finite truncated sum, defined for any coefficients; no feasibility check
    t = _multinomial_sq_table(max_order)
    idx = np.arange(max_order + 1)
    a1 = p1 ** (2 * idx)
    a2 = p2 ** (2 * idx)
    a3 = p3 ** (2 * idx)
    total = float(np.einsum("ijk,i,j,k->", t, a1, a2, a3))
    return total - 1.0  # drop the (0,0,0) term


def lambda_sq_sum(params: ArParams, max_order: int = DEFAULT_MAX_ORDER) -> float:
    """Sum of squared moving-average weights over 1 <= k+l+r <= max_order."""
    require_feasible(params)
    if max_order < 0:
        raise DomainError("max_order must be nonnegative")
    return _lambda_sq_sum_raw(params.phi1, params.phi2, params.phi3, max_order)


def sigma_hat_phi(
    params: ArParams,
    sigma_y: float,
    kappa2: float,
    max_order: int = DEFAULT_MAX_ORDER,
) -> float:
    """Innovation scale implied by an observed-field scale under the BIP model.

    sigma^2 = sigma_y^2 / (1 + kappa2 * sum of squared MA weights), the sum
    excluding the (0,0,0) term: the bounded-propagation expansion carries past
    innovations only, so the origin contributes the bare innovation already
    accounted for by the leading 1.
    """
    if not (sigma_y > 0):
        raise DomainError("sigma_y must be positive")
    if kappa2 < 0:
        raise DomainError("kappa2 must be nonnegative")
    return sigma_y / math.sqrt(1.0 + kappa2 * lambda_sq_sum(params, max_order))


def bip_residuals(
    y: Grid2D,
    params: ArParams,
    sigma: float,
    family: RhoFamily = DEFAULT_FAMILY,
) -> Grid2D:
    """Bounded-propagation residuals on the interior lattice.

    The recursion runs in raster order with zero residual on the first row and
    column; each residual depends only on strictly smaller indices.  With
    eta = identity this reproduces ar_residuals exactly.
    """
    if y.rows < 2 or y.cols < 2:
        raise DomainError("residuals need a grid of at least 2x2")
    if not (sigma > 0):
        raise DomainError("sigma must be positive")
    require_feasible(params)
    if family is DEFAULT_FAMILY:
        out = _kernels.bip_residuals_core(
            y.values, params.phi1, params.phi2, params.phi3, sigma
        )
        return Grid2D(out)
    return Grid2D(_bip_generic(y.values, params, sigma, family.eta))


def _bip_generic(yv: np.ndarray, params: ArParams, sigma: float, eta_fn) -> np.ndarray:
    rows, cols = yv.shape
    p1, p2, p3 = params.phi1, params.phi2, params.phi3
    c = np.empty((rows, cols))
    out = np.empty((rows - 1, cols - 1))
    c[0, :] = yv[0, :]
    for i in range(1, rows):
        c[i, 0] = yv[i, 0]
        for j in range(1, cols):
            e = yv[i, j] - p1 * c[i - 1, j] - p2 * c[i, j - 1] - p3 * c[i - 1, j - 1]
            c[i, j] = yv[i, j] + sigma * float(eta_fn(e / sigma)) - e
            out[i - 1, j - 1] = e
    return out
