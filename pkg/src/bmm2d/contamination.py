"""Replacement-outlier contamination of simulated fields.

The observed process is Z = (1-xi)*Y + xi*W with an i.i.d. Bernoulli(alpha)
mask xi.  Four replacement mechanisms are provided: additive Gaussian shifts
(W = Y + nu), heavy-tailed Student-t replacement, replacement by an
independent AR field, and Gaussian white-noise replacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError
from .grid import (
    ArParams,
    DEFAULT_BURN_IN,
    GaussianNoise,
    Grid2D,
    NoiseSpec,
    require_feasible,
    simulate_ar2d,
)


@dataclass(frozen=True)
class AdditiveGaussian:
    variance: float = 50.0

    def __post_init__(self):
        if not (self.variance > 0):
            raise DomainError("additive outlier variance must be positive")


@dataclass(frozen=True)
class ReplaceStudentT:
    df: float = 2.3

    def __post_init__(self):
        if not (self.df > 0):
            raise DomainError("degrees of freedom must be positive")


@dataclass(frozen=True)
class ReplaceAr:
    params: ArParams = field(default_factory=lambda: ArParams(0.1, 0.2, 0.3))
    noise: NoiseSpec = field(default_factory=GaussianNoise)
    burn_in: int = DEFAULT_BURN_IN


@dataclass(frozen=True)
class ReplaceWhiteNoise:
    variance: float = 50.0

    def __post_init__(self):
        if not (self.variance > 0):
            raise DomainError("white noise variance must be positive")


OutlierKind = Union[AdditiveGaussian, ReplaceStudentT, ReplaceAr, ReplaceWhiteNoise]


@dataclass(frozen=True)
class ContaminationSpec:
    alpha: float
    kind: OutlierKind

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise DomainError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class ContaminatedField:
    z: Grid2D
    mask: np.ndarray  # boolean, True where the value was replaced

    @property
    def n_replaced(self) -> int:
        return int(self.mask.sum())


def contaminate(y: Grid2D, spec: ContaminationSpec, seed: int) -> ContaminatedField:
    """Apply a replacement-outlier spec to a field, deterministically in seed.

    One master seed derives three disjoint substreams: the Bernoulli mask, the
    replacement draws, and (for AR replacement) the replacement field's own
    innovations.  Cells where the mask is False keep their value bit-exactly.
    """
    if isinstance(spec.kind, ReplaceAr):
        require_feasible(spec.kind.params)
    ss = np.random.SeedSequence(seed)
    mask_stream, repl_stream, ar_stream = ss.spawn(3)
    shape = y.values.shape
    mask = np.random.default_rng(mask_stream).random(shape) < spec.alpha

    rng = np.random.default_rng(repl_stream)
    kind = spec.kind
    if isinstance(kind, AdditiveGaussian):
        w = y.values + np.sqrt(kind.variance) * rng.standard_normal(shape)
    elif isinstance(kind, ReplaceStudentT):
        w = rng.standard_t(kind.df, shape)
    elif isinstance(kind, ReplaceWhiteNoise):
        w = np.sqrt(kind.variance) * rng.standard_normal(shape)
    elif isinstance(kind, ReplaceAr):
        ar_seed = int(ar_stream.generate_state(1, dtype=np.uint64)[0])
        w = simulate_ar2d(
            kind.params, shape[0], shape[1], kind.noise, kind.burn_in, ar_seed
        ).values
    else:
        raise DomainError(f"unknown contamination kind {kind!r}")

    z = np.where(mask, w, y.values)
    return ContaminatedField(z=Grid2D(z), mask=mask)
