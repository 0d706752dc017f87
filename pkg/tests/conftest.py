from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bmm2d import ArParams, GaussianNoise, OptimizerConfig, simulate_ar2d

settings.register_profile(
    "pkg",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    max_examples=50,
)
settings.load_profile("pkg")


STD_PARAMS = ArParams(0.15, 0.17, 0.20)


@pytest.fixture(scope="session")
def std_params() -> ArParams:
    return STD_PARAMS


@pytest.fixture(scope="session")
def light_config() -> OptimizerConfig:
    # small optimizer budget keeps estimator tests fast; accuracy margins in
    # the assertions account for it
    return OptimizerConfig(restarts=2, max_evals=250, tolerance=1e-4)


@pytest.fixture(scope="session")
def clean_field():
    return simulate_ar2d(STD_PARAMS, 40, 40, GaussianNoise(), 50, seed=2024)


def random_feasible(rng: np.random.Generator, margin: float = 0.02) -> ArParams:
    """Uniform direction, radius strictly inside the feasibility region."""
    raw = rng.uniform(-1.0, 1.0, 3)
    s = np.abs(raw).sum()
    if s == 0.0:
        return ArParams(0.1, 0.1, 0.1)
    radius = rng.uniform(0.05, 1.0 - 0.01 - margin)
    scaled = raw * (radius / s)
    return ArParams(*scaled)
