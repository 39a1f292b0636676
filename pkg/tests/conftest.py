from __future__ import annotations

import numpy as np
import pytest

from echo_pathways.config import ScenarioConfig


@pytest.fixture
def small_config() -> ScenarioConfig:
    return ScenarioConfig(
        n=40, k_o=5, epsilon=0.45, alpha=0.2, q=0.2, p=0.1, k_R=4,
        max_steps=150, quiet_steps=20, seed=31,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
