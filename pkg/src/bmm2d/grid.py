"""Lattice data types, AR-2D field simulation, and classical residuals.

The model generates a field on the integer lattice through the quarter-plane
recursion

    Y[i,j] = phi1*Y[i-1,j] + phi2*Y[i,j-1] + phi3*Y[i-1,j-1] + eps[i,j]

with independent innovations.  Everything in this module is a pure function of
its arguments; simulation is pure given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .errors import DomainError, FormatError

# Feasibility margin: parameter triples with |phi1|+|phi2|+|phi3| <= 1 - zeta
# admit a convergent moving-average representation.
DEFAULT_ZETA = 0.01
DEFAULT_BURN_IN = 50
DEFAULT_MAX_ORDER = 30

# Coefficient magnitudes below this end the moving-average expansion early.
_MA_EPS = 1e-12


@dataclass(frozen=True)
class Grid2D:
    """Immutable dense real-valued lattice (fields, residuals, images)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DomainError("grid values must form a non-empty 2-D array")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def transpose(self) -> "Grid2D":
        return Grid2D(self.values.T)


@dataclass(frozen=True)
class ArParams:
    """Coefficient triple of the first-order quarter-plane AR model."""

    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self):
        for v in (self.phi1, self.phi2, self.phi3):
            if not math.isfinite(v):
                raise DomainError("AR parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3])

    def l1(self) -> float:
        return abs(self.phi1) + abs(self.phi2) + abs(self.phi3)

    @classmethod
    def from_array(cls, a) -> "ArParams":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class GaussianNoise:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0):
            raise DomainError("noise variance must be positive")


@dataclass(frozen=True)
class StudentTNoise:
    df: float

    def __post_init__(self):
        if not (self.df > 0):
            raise DomainError("degrees of freedom must be positive")


NoiseSpec = Union[GaussianNoise, StudentTNoise]


@dataclass(frozen=True)
class MaCoefficient:
    """One weight of the moving-average expansion of the AR field."""

    k: int
    l: int
    r: int
    weight: float


def is_feasible(params: ArParams, zeta: float = DEFAULT_ZETA) -> bool:
    """True when the coefficient triple lies in the contractive region."""
    if not (zeta > 0):
        raise DomainError("zeta must be positive")
    return params.l1() <= 1.0 - zeta


def require_feasible(params: ArParams, zeta: float = DEFAULT_ZETA) -> None:
    if not is_feasible(params, zeta):
        raise DomainError(
            f"parameters {params} infeasible: |phi| sum {params.l1():.6g} > {1 - zeta:.6g}"
        )


def project_feasible(params: ArParams, zeta: float = DEFAULT_ZETA) -> ArParams:
    """Radially shrink an infeasible triple onto the interior of the region."""
    s = params.l1()
    limit = 1.0 - zeta
    if s <= limit:
        return params
    f = limit * (1.0 - 1e-9) / s
    return ArParams(params.phi1 * f, params.phi2 * f, params.phi3 * f)


def ma_coefficients(params: ArParams, max_order: int = DEFAULT_MAX_ORDER) -> list[MaCoefficient]:
    """Moving-average weights lambda[k,l,r] for all k+l+r <= max_order.

    lambda[k,l,r] = multinomial(k+l+r; k,l,r) * phi1^k * phi2^l * phi3^r, with
    the multinomial factor computed exactly through integer binomials.  The
    expansion stops early once a whole diagonal falls below 1e-12 in absolute
    value.
    """
    require_feasible(params)
    if max_order < 0:
        raise DomainError("max_order must be nonnegative")
    p1, p2, p3 = params.phi1, params.phi2, params.phi3
    out: list[MaCoefficient] = []
    for total in range(max_order + 1):
        diagonal: list[MaCoefficient] = []
        biggest = 0.0
        for k in range(total + 1):
            for l in range(total - k + 1):
                r = total - k - l
                coeff = math.comb(total, k) * math.comb(total - k, l)
                w = coeff * p1**k * p2**l * p3**r
                diagonal.append(MaCoefficient(k, l, r, w))
                if abs(w) > biggest:
                    biggest = abs(w)
        if total > 0 and biggest < _MA_EPS:
            break
        out.extend(diagonal)
    return out


def _draw_noise(noise: NoiseSpec, rng: np.random.Generator, shape) -> np.ndarray:
    if isinstance(noise, GaussianNoise):
        return noise.mean + math.sqrt(noise.variance) * rng.standard_normal(shape)
    if isinstance(noise, StudentTNoise):
        return rng.standard_t(noise.df, shape)
    raise DomainError(f"unknown noise spec {noise!r}")


def simulate_ar2d(
    params: ArParams,
    rows: int,
    cols: int,
    noise: NoiseSpec = GaussianNoise(),
    burn_in: int = DEFAULT_BURN_IN,
    seed: int | None = None,
) -> Grid2D:
    """Simulate a rows x cols field, discarding a burn-in border.

    The recursion runs on a (rows+burn_in) x (cols+burn_in) lattice with zero
    boundary outside it; the bottom-right crop is returned.  Deterministic
    given the seed.
    """
    require_feasible(params)
    if rows < 2 or cols < 2:
        raise DomainError("field must be at least 2x2")
    if burn_in < 0:
        raise DomainError("burn_in must be nonnegative")
    if seed is None:
        raise DomainError("simulation requires an explicit seed")
    rng = np.random.default_rng(seed)
    eps = _draw_noise(noise, rng, (rows + burn_in, cols + burn_in))
    y = _kernels.simulate_recursion(eps, params.phi1, params.phi2, params.phi3)
    return Grid2D(y[burn_in:, burn_in:])


def ar_residuals(y: Grid2D, params: ArParams) -> Grid2D:
    """Classical one-step prediction residuals on the interior lattice.

    Output has shape (rows-1, cols-1): entry (i,j) is the residual at grid
    cell (i+1, j+1).
    """
    if y.rows < 2 or y.cols < 2:
        raise DomainError("residuals need a grid of at least 2x2")
    res = _kernels.ar_residuals_core(y.values, params.phi1, params.phi2, params.phi3)
    return Grid2D(res)


def save_csv(grid: Grid2D, path) -> None:
    """Write a grid as headered CSV: 'rows,cols' line, then one line per row."""
    with open(path, "w") as fh:
        fh.write(f"{grid.rows},{grid.cols}\n")
        for row in grid.values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path) -> Grid2D:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}: malformed grid CSV header {header!r}")
        try:
            rows, cols = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}: malformed grid CSV header {header!r}") from None
        data = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                data.append([float(tok) for tok in line.split(",")])
            except ValueError:
                raise FormatError(f"{path}: non-numeric grid CSV value in {line!r}") from None
    try:
        arr = np.array(data)
    except ValueError:
        raise FormatError(f"{path}: ragged grid CSV body") from None
    if arr.ndim != 2 or arr.shape != (rows, cols):
        raise FormatError(
            f"{path}: grid CSV body {arr.shape} does not match header ({rows}, {cols})"
        )
    return Grid2D(arr)
