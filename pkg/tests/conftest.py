import numpy as np
import pytest
import torch

import scalebranch as sb

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def desk_config() -> sb.NetConfig:
    return sb.get_profile("desk").net


@pytest.fixture(scope="session")
def tiny_config() -> sb.NetConfig:
    """Very small 2-stage architecture for fast unit tests (4 -> 16 px)."""
    return sb.NetConfig(
        subvector_dims=(4, 4),
        base_resolution=(4, 4),
        channel_schedule=(16, 8),
        stages=2,
    )


@pytest.fixture(scope="session")
def tiny_corpus() -> np.ndarray:
    return sb.generate_synthetic(sb.SyntheticRecipe(n_samples=32, size=(16, 16)), seed=7)


@pytest.fixture(scope="session")
def desk_corpus() -> np.ndarray:
    return sb.generate_synthetic(sb.SyntheticRecipe(n_samples=64), seed=11)
