"""Shared fixtures: a small 8-cube dataset and a briefly trained model."""

import pytest

from divseg.config import ExperimentConfig
from divseg.phantom import Manifest, make_dataset
from divseg.train import train


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset") / "data"
    make_dataset(3, 2, seed=11, out_dir=root, dims=8)
    return root


@pytest.fixture(scope="session")
def tiny_config(tiny_data):
    return ExperimentConfig(
        data_dir=str(tiny_data), epochs=2, batch_size=2, seed=3, out_dir="unused"
    )


@pytest.fixture(scope="session")
def tiny_manifests(tiny_data):
    return {
        "train": Manifest.load(tiny_data / "train" / "manifest.json"),
        "test": Manifest.load(tiny_data / "test" / "manifest.json"),
    }


@pytest.fixture(scope="session")
def tiny_trained(tiny_config, tiny_manifests):
    params, log = train(tiny_config, tiny_manifests["train"])
    return params, log
