"""Parameter estimators: least squares, M, GM, and the two-stage robust BMM.

All iterative estimators share one derivative-free minimizer over the
feasible coefficient region (Nelder-Mead with a large-penalty barrier and
seeded Latin-hypercube restarts), so results are deterministic for a given
grid and configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from . import _kernels
from .errors import DegenerateInputError, DomainError
from .grid import (
    ArParams,
    DEFAULT_MAX_ORDER,
    DEFAULT_ZETA,
    Grid2D,
    is_feasible,
    project_feasible,
)
from .robust import _lambda_sq_sum_raw, kappa_squared, m_scale

METHODS = ("ls", "m", "gm", "bmm")

_PENALTY = 1e6
_RESTART_SEED_TAG = 0xB3D2  # mixed with config fields so restarts are reproducible
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 5
    max_evals: int = 400
    tolerance: float = 1e-6
    zeta: float = DEFAULT_ZETA

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")
        if self.max_evals < 1:
            raise DomainError("max_evals must be >= 1")
        if not (self.tolerance > 0):
            raise DomainError("tolerance must be positive")
        if not (0 < self.zeta < 1):
            raise DomainError("zeta must lie in (0, 1)")


@dataclass(frozen=True)
class EstimateResult:
    params: ArParams
    scale: float
    objective: float
    branch: str  # "ar" | "bip" | "na"
    method: str  # one of METHODS
    warning: str | None = None


@dataclass(frozen=True)
class BmmStages:
    """Intermediate quantities of the two-stage fit, kept for inspection."""

    start: ArParams
    scale_params_ar: ArParams | None
    scale_ar: float
    scale_params_bip: ArParams | None
    scale_bip: float
    scale_star: float
    refined_ar: ArParams | None
    criterion_ar: float
    refined_bip: ArParams | None
    criterion_bip: float
    branch: str
    warning: str | None


def _mad(a: np.ndarray) -> float:
    med = np.median(a)
    return float(np.median(np.abs(a - med)))


def _restart_points(config: OptimizerConfig) -> np.ndarray:
    if config.restarts == 1:
        return np.empty((0, 3))
    ss = np.random.SeedSequence((_RESTART_SEED_TAG, config.restarts))
    sampler = qmc.LatinHypercube(d=3, seed=np.random.default_rng(ss))
    u = sampler.random(config.restarts - 1)
    # scaled cube inscribed in the feasible L1 ball
    return (2.0 * u - 1.0) * (1.0 - config.zeta) / 3.0


def _minimize_impl(
    objective: Callable[[np.ndarray], float],
    start: ArParams,
    config: OptimizerConfig,
) -> tuple[ArParams, float, bool]:
    """Shared minimizer core; objective takes a length-3 ndarray.

    Returns (best feasible point, raw objective there, budget_exhausted).
    """
    limit = 1.0 - config.zeta

    def penalized(x):
        violation = abs(x[0]) + abs(x[1]) + abs(x[2]) - limit
        val = objective(x)
        if violation > 0.0:
            return val + _PENALTY * violation
        return val

    starts = [project_feasible(start, config.zeta).as_array()]
    starts.extend(_restart_points(config))

    best_x = None
    best_val = math.inf
    all_exhausted = True
    for x0 in starts:
        res = optimize.minimize(
            penalized,
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": config.max_evals,
                "xatol": config.tolerance,
                "fatol": config.tolerance,
            },
        )
        if res.success:
            all_exhausted = False
        cand = ArParams.from_array(res.x)
        if not is_feasible(cand, config.zeta):
            cand = project_feasible(cand, config.zeta)
        val = float(objective(cand.as_array()))
        if math.isfinite(val) and val < best_val:
            best_val = val
            best_x = cand
    if best_x is None:
        # fall back to the (projected) start so callers can flag failure
        best_x = project_feasible(start, config.zeta)
        best_val = float(objective(best_x.as_array()))
    return best_x, best_val, all_exhausted


def minimize_feasible(
    objective: Callable[[ArParams], float],
    start: ArParams,
    config: OptimizerConfig = OptimizerConfig(),
) -> ArParams:
    """Minimize a scalar function of ArParams over the feasible region."""

    def as_array_objective(x):
        return float(objective(ArParams.from_array(x)))

    best, _, _ = _minimize_impl(as_array_objective, start, config)
    return best


def estimate_ls(y: Grid2D) -> EstimateResult:
    """Exact least-squares fit via the 3x3 normal equations, unprojected."""
    if y.rows < 2 or y.cols < 2:
        raise DomainError("estimation needs a grid of at least 2x2")
    v = y.values
    t = v[1:, 1:].ravel()
    a = np.column_stack([v[:-1, 1:].ravel(), v[1:, :-1].ravel(), v[:-1, :-1].ravel()])
    g = a.T @ a
    if not np.all(np.isfinite(g)) or np.linalg.cond(g) > _COND_LIMIT:
        raise DegenerateInputError("singular normal matrix (constant or degenerate field)")
    phi = np.linalg.solve(g, a.T @ t)
    resid = t - a @ phi
    params = ArParams.from_array(phi)
    warning = None
    if not is_feasible(params, DEFAULT_ZETA):
        warning = "least-squares estimate lies outside the feasible region"
    return EstimateResult(
        params=params,
        scale=float(np.std(resid)),
        objective=float(np.mean(resid * resid)),
        branch="na",
        method="ls",
        warning=warning,
    )


def _ls_scale_mad(y: Grid2D, ls: EstimateResult) -> float:
    res = _kernels.ar_residuals_core(
        y.values, ls.params.phi1, ls.params.phi2, ls.params.phi3
    )
    sigma = 1.4826 * _mad(res.ravel())
    if not (sigma > 0):
        raise DegenerateInputError("zero residual scale")
    return sigma


def estimate_m(y: Grid2D, config: OptimizerConfig = OptimizerConfig()) -> EstimateResult:
    """M-estimator: minimize the mean bounded loss of scaled residuals.

    The residual scale is fixed in advance at 1.4826 * MAD of the LS
    residuals; the search starts from the projected LS estimate.
    """
    ls = estimate_ls(y)
    sigma = _ls_scale_mad(y, ls)
    v = y.values

    def objective(x):
        return _kernels.mean_rho2_ar(v, x[0], x[1], x[2], sigma)

    start = project_feasible(ls.params, config.zeta)
    best, val, exhausted = _minimize_impl(objective, start, config)
    return EstimateResult(
        params=best,
        scale=sigma,
        objective=val,
        branch="na",
        method="m",
        warning="optimizer budget exhausted" if exhausted else None,
    )


def gm_weights(y: Grid2D, sigma_y2: float) -> np.ndarray:
    """Fixed GM downweights from the squared magnitude of the regressor cells.

    m = mean of the three squared neighbor values, normalized by the robust
    field variance so the clipped influence scale 1.5 is unit-free; the
    weight is psi_huber(m)/m, taken as 1 at m = 0.
    """
    if not (sigma_y2 > 0):
        raise DomainError("sigma_y2 must be positive")
    v = y.values
    m = (v[:-1, 1:] ** 2 + v[1:, :-1] ** 2 + v[:-1, :-1] ** 2) / (3.0 * sigma_y2)
    with np.errstate(divide="ignore"):
        t = np.where(m == 0.0, 1.0, np.minimum(1.0, 1.5 / m))
    return t


def estimate_gm(y: Grid2D, config: OptimizerConfig = OptimizerConfig()) -> EstimateResult:
    """GM-estimator: bounded loss with fixed regressor-based downweights."""
    ls = estimate_ls(y)
    sigma_y = 1.4826 * _mad(y.values.ravel())
    if not (sigma_y > 0):
        raise DegenerateInputError("zero field scale")
    res = _kernels.ar_residuals_core(
        y.values, ls.params.phi1, ls.params.phi2, ls.params.phi3
    )
    scale_est = m_scale(res.ravel())
    sigma = scale_est.s
    if not scale_est.converged or not (sigma > 0):
        raise DegenerateInputError("residual scale estimate failed")
    w = gm_weights(y, sigma_y * sigma_y)
    wsum = float(w.sum())
    v = y.values

    def objective(x):
        acc = _kernels.weighted_sum_rho2_ar(v, x[0], x[1], x[2], sigma, w)
        return sigma * (acc + 0.5 * wsum)

    start = project_feasible(ls.params, config.zeta)
    best, val, exhausted = _minimize_impl(objective, start, config)
    return EstimateResult(
        params=best,
        scale=sigma,
        objective=val,
        branch="na",
        method="gm",
        warning="optimizer budget exhausted" if exhausted else None,
    )


def bmm_stages(y: Grid2D, config: OptimizerConfig = OptimizerConfig()) -> BmmStages:
    """Run both stages of the robust fit and keep every intermediate result.

    Scale stage: minimize the robust residual scale over the feasible region,
    once on the plain AR residuals and once on the bounded-propagation
    residuals (whose innovation scale is tied to the parameters through the
    moving-average expansion).  The smaller of the two scales feeds the
    refinement stage, which minimizes the mean bounded loss on each branch
    and keeps the branch with the smaller criterion.
    """
    ls = estimate_ls(y)
    start = project_feasible(ls.params, config.zeta)
    v = y.values
    sigma_y = 1.4826 * _mad(v.ravel())
    if not (sigma_y > 0):
        raise DegenerateInputError("zero field scale")
    kappa2 = kappa_squared()

    def scale_ar_obj(x):
        return _kernels.scale_objective_ar(v, x[0], x[1], x[2])

    def scale_bip_obj(x):
        lam = _lambda_sq_sum_raw(x[0], x[1], x[2], DEFAULT_MAX_ORDER)
        sig = sigma_y / math.sqrt(1.0 + kappa2 * lam)
        return _kernels.scale_objective_bip(v, x[0], x[1], x[2], sig)

    phi_s_ar, s_ar, _ = _minimize_impl(scale_ar_obj, start, config)
    phi_s_bip, s_bip, _ = _minimize_impl(scale_bip_obj, start, config)
    ar_ok = math.isfinite(s_ar) and s_ar > 0
    bip_ok = math.isfinite(s_bip) and s_bip > 0
    if not ar_ok and not bip_ok:
        raise DegenerateInputError("scale stage failed on both branches")
    s_star = min(s_ar if ar_ok else math.inf, s_bip if bip_ok else math.inf)

    warning = None
    refined_ar = None
    crit_ar = math.inf
    if ar_ok:
        def m_ar_obj(x):
            return _kernels.mean_rho2_ar(v, x[0], x[1], x[2], s_star)

        refined_ar, crit_ar, _ = _minimize_impl(m_ar_obj, phi_s_ar, config)
    else:
        warning = "plain-residual scale stage failed; bounded branch only"

    refined_bip = None
    crit_bip = math.inf
    if bip_ok:
        def m_bip_obj(x):
            # the refinement stage is fully frozen at the stage-one scale:
            # it drives the recursion and divides the loss
            return _kernels.mean_rho2_bip(v, x[0], x[1], x[2], s_star, s_star)

        refined_bip, crit_bip, _ = _minimize_impl(m_bip_obj, phi_s_bip, config)
    else:
        warning = "bounded-propagation scale stage failed; plain branch only"

    branch = "ar" if crit_ar <= crit_bip else "bip"
    return BmmStages(
        start=start,
        scale_params_ar=phi_s_ar if ar_ok else None,
        scale_ar=s_ar if ar_ok else math.inf,
        scale_params_bip=phi_s_bip if bip_ok else None,
        scale_bip=s_bip if bip_ok else math.inf,
        scale_star=s_star,
        refined_ar=refined_ar,
        criterion_ar=crit_ar,
        refined_bip=refined_bip,
        criterion_bip=crit_bip,
        branch=branch,
        warning=warning,
    )


def estimate_bmm(y: Grid2D, config: OptimizerConfig = OptimizerConfig()) -> EstimateResult:
    """Two-stage robust estimator choosing between plain and bounded branches."""
    st = bmm_stages(y, config)
    if st.branch == "ar":
        params, objective = st.refined_ar, st.criterion_ar
    else:
        params, objective = st.refined_bip, st.criterion_bip
    return EstimateResult(
        params=params,
        scale=st.scale_star,
        objective=objective,
        branch=st.branch,
        method="bmm",
        warning=st.warning,
    )


def estimate(y: Grid2D, method: str, config: OptimizerConfig = OptimizerConfig()) -> EstimateResult:
    """Dispatch by method tag."""
    if method == "ls":
        return estimate_ls(y)
    if method == "m":
        return estimate_m(y, config)
    if method == "gm":
        return estimate_gm(y, config)
    if method == "bmm":
        return estimate_bmm(y, config)
    raise DomainError(f"unknown estimation method {method!r}")
