"""Test configuration for DeFusion backend tests."""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add backend root to path for imports
backend_root = Path(__file__).resolve().parents[1]
if str(backend_root) not in sys.path:
    sys.path.insert(0, str(backend_root))

from dataset.synthetic import GeneratorSpec, generate  # noqa: E402
from experiments.config import build_config  # noqa: E402
from experiments.runner import ExperimentData  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """40 cases, 36px images, 3 days, 6 indicators."""
    directory = tmp_path_factory.mktemp("cohort")
    spec = GeneratorSpec(n_cases=40, image_size=36, num_days=3, num_indicators=6, seed=7)
    return generate(spec, directory / "data")


TINY_EXPERIMENT = {
    "image_size": 16,
    "resize": 20,
    "stride": 8,
    "channels": 4,
    "res_blocks": 1,
    "d_img": 4,
    "d_tab": 4,
    "d_f": 4,
    "m": 4,
    "heads": 2,
    "img_layers": 1,
    "tab_layers": 1,
    "fusion_hidden": 8,
    "classifier_hidden": 8,
    "num_indicators": 6,
    "epochs": 2,
    "batch_size": 8,
    "k": 3,
    "dtype": "float64",
}


@pytest.fixture
def tiny_config(small_dataset):
    """Smallest experiment config that fits ``small_dataset``."""
    return build_config({"dataset": str(small_dataset), **TINY_EXPERIMENT})


@pytest.fixture(scope="session")
def experiment_data(small_dataset):
    return ExperimentData.load(small_dataset, workers=2)


@pytest.fixture
def tiny_overrides():
    return dict(TINY_EXPERIMENT)
