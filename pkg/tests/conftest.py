import numpy as np
import pytest

from inrmask.attribution import AreaSearchConfig, ExplainConfig, LossWeights, TrainConfig
from inrmask.inr import NetworkConfig
from inrmask.models import ImagePair, OracleClassifier

from .helpers import planted_scene


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale experiment, minutes of CPU time")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_network():
    return NetworkConfig(hidden_layers=2, hidden_width=32, component_count=16)


@pytest.fixture
def oracle_pair():
    image, region = planted_scene()
    pair = ImagePair.build(image, "black")
    return pair, OracleClassifier.calibrated(region, pair.original, pair.perturbed), region


@pytest.fixture
def tiny_explain(tiny_network):
    return ExplainConfig(
        train=TrainConfig(epochs=3, learning_rate=1e-3, seed=0),
        weights=LossWeights(),
        search=AreaSearchConfig(),
        network=tiny_network,
        filter_radius_frac=0.05,
    )
