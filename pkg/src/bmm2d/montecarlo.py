"""Replication engine: simulate, contaminate, estimate, aggregate.

Each replication derives its own field and contamination seeds from the
master seed by a fixed keyed scheme, so results are reproducible, identical
under any worker count, and unchanged when methods are added or removed.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .contamination import ContaminationSpec, contaminate
from .errors import DegenerateInputError, DomainError
from .estimators import METHODS, OptimizerConfig, estimate
from .grid import ArParams, DEFAULT_BURN_IN, GaussianNoise, simulate_ar2d

PARAM_NAMES = ("phi1", "phi2", "phi3")

_MAX_EXCLUDED_FRACTION = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    true_params: ArParams
    window: int
    replications: int
    master_seed: int
    methods: tuple[str, ...] = METHODS
    contamination: ContaminationSpec | None = None
    optimizer: OptimizerConfig = OptimizerConfig()
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if self.window < 4:
            raise DomainError("window must be at least 4")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise DomainError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        ordered = tuple(m for m in METHODS if m in self.methods)
        object.__setattr__(self, "methods", ordered)


def replication_seeds(master_seed: int, replication: int) -> tuple[int, int]:
    """Field and contamination seeds for one replication, distinct across keys."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(replication,))
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def _run_replication(config: ExperimentConfig, rep: int):
    field_seed, contam_seed = replication_seeds(config.master_seed, rep)
    y = simulate_ar2d(
        config.true_params,
        config.window,
        config.window,
        GaussianNoise(0.0, 1.0),
        config.burn_in,
        field_seed,
    )
    if config.contamination is not None:
        y = contaminate(y, config.contamination, contam_seed).z
    row = np.empty((len(config.methods), 3))
    seconds = np.zeros(len(config.methods))
    for i, method in enumerate(config.methods):
        t0 = time.perf_counter()
        try:
            res = estimate(y, method, config.optimizer)
        except DegenerateInputError:
            return rep, None, seconds
        seconds[i] = time.perf_counter() - t0
        row[i] = res.params.as_array()
    return rep, row, seconds


@dataclass(frozen=True)
class McReport:
    config: ExperimentConfig
    estimates: np.ndarray  # (kept, methods, 3)
    kept: tuple[int, ...]
    excluded: tuple[int, ...]
    method_seconds: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.estimates, dtype=np.float64)
        e.flags.writeable = False
        object.__setattr__(self, "estimates", e)

    @property
    def n(self) -> int:
        return self.estimates.shape[0]

    def _mi(self, method: str) -> int:
        return self.config.methods.index(method)

    def mean(self, method: str) -> np.ndarray:
        return self.estimates[:, self._mi(method), :].mean(axis=0)

    def sample_variance(self, method: str) -> np.ndarray:
        if self.n < 2:
            return np.zeros(3)
        return self.estimates[:, self._mi(method), :].var(axis=0, ddof=1)

    def mse(self, method: str) -> np.ndarray:
        d = self.estimates[:, self._mi(method), :] - self.config.true_params.as_array()
        return (d * d).mean(axis=0)

    def rows(self):
        """Report cells in canonical order: methods as configured, then params."""
        true = self.config.true_params.as_array()
        for method in self.config.methods:
            mean = self.mean(method)
            var = self.sample_variance(method)
            mse = self.mse(method)
            for p in range(3):
                yield (method, PARAM_NAMES[p], true[p], mean[p], var[p], mse[p], self.n)

    def seconds(self, method: str) -> float:
        return self.method_seconds[self._mi(method)]


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> McReport:
    """Run all replications and aggregate; degenerate replications are dropped.

    More than 5% dropped replications fails the run.  Results are a pure
    function of the config; `jobs` only controls parallelism.
    """
    reps = range(config.replications)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_run_replication, [config] * config.replications, reps, chunksize=8))
    else:
        raw = [_run_replication(config, r) for r in reps]
    raw.sort(key=lambda item: item[0])

    kept, rows = [], []
    excluded = []
    seconds = np.zeros(len(config.methods))
    for rep, row, secs in raw:
        seconds += secs
        if row is None:
            excluded.append(rep)
        else:
            kept.append(rep)
            rows.append(row)
    if len(excluded) > _MAX_EXCLUDED_FRACTION * config.replications:
        raise RuntimeError(
            f"{len(excluded)} of {config.replications} replications degenerate; run failed"
        )
    if not kept:
        raise RuntimeError("all replications degenerate")
    return McReport(
        config=config,
        estimates=np.stack(rows),
        kept=tuple(kept),
        excluded=tuple(excluded),
        method_seconds=tuple(float(s) for s in seconds),
    )


def emit_report(report: McReport, path) -> None:
    """Summary CSV: method,param,true,mean,variance,mse,n with 12 significant digits."""
    with open(path, "w") as fh:
        fh.write("method,param,true,mean,variance,mse,n\n")
        for method, param, true, mean, var, mse, n in report.rows():
            fh.write(
                f"{method},{param},{true:.12g},{mean:.12g},{var:.12g},{mse:.12g},{n}\n"
            )


def emit_raw(report: McReport, path) -> None:
    """Per-replication CSV: method,param,replication,estimate."""
    with open(path, "w") as fh:
        fh.write("method,param,replication,estimate\n")
        for mi, method in enumerate(report.config.methods):
            for p, pname in enumerate(PARAM_NAMES):
                for ki, rep in enumerate(report.kept):
                    fh.write(f"{method},{pname},{rep},{report.estimates[ki, mi, p]:.12g}\n")
