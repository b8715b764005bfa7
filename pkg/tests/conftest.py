import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flsim import Batch, mlp_spec, init_params
from flsim.data import TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS


@pytest.fixture
def tiny_mlp():
    return mlp_spec((1, 1, 4), hidden=(3,), num_classes=2)


@pytest.fixture
def tiny_params(tiny_mlp):
    return init_params(tiny_mlp, 123)


@pytest.fixture
def tiny_batch():
    gen = np.random.default_rng(5)
    return Batch(gen.random((3, 4)), np.array([0, 1, 1]))


def _has_idx_files(root: Path) -> bool:
    return all((root / name).exists() for name in
               (TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS))


@pytest.fixture(scope="session")
def scaled_data():
    """Directory with the 28x28 digit IDX files used by the scaled runs.

    Prefers real files from FLSIM_DATA_DIR; otherwise builds the
    deterministic augmented-digits substitute (see surrogate.py).
    """
    env = os.environ.get("FLSIM_DATA_DIR")
    if env and _has_idx_files(Path(env)):
        return Path(env), "mnist-idx"
    from surrogate import build_surrogate_idx
    cache = Path(__file__).parent / "_cache" / "surrogate"
    build_surrogate_idx(cache)
    return cache, "augmented-digits-surrogate"
