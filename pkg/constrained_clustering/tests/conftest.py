import numpy as np
import pytest

from constrained_clustering.datasets import make_blobs
from constrained_clustering.experiments import prepare_shared_model
from constrained_clustering.network import ArchitectureSpec, PretrainConfig
from constrained_clustering.trainer import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def blobs():
    return make_blobs(4, 50, 6, separation=12.0, sigma=1.0, seed=3)


@pytest.fixture(scope="session")
def tiny_spec(blobs):
    return ArchitectureSpec(input_dim=blobs.dim, hidden_dims=(16, 16), embedding_dim=4)


@pytest.fixture(scope="session")
def train_config():
    return TrainConfig(
        epochs=4,
        batch_size=64,
        constraint_batch_size=64,
        eval_batch_size=512,
        learning_rate=0.001,
        kmeans_restarts=5,
        seed=0,
    )


@pytest.fixture(scope="session")
def pretrain_config():
    return PretrainConfig(layer_epochs=5, finetune_epochs=15, batch_size=32, learning_rate=0.01, seed=0)


@pytest.fixture(scope="session")
def shared_model(blobs, tiny_spec, train_config, pretrain_config):
    return prepare_shared_model(blobs, 4, train_config, spec=tiny_spec, pretrain_config=pretrain_config)


# Full-size setup: 4 blobs of 500 points in 10 dimensions, centres 6 sigma
# apart, the default d-500-500-2000-10 network pretrained as an SDAE.


@pytest.fixture(scope="session")
def reference_blobs():
    return make_blobs(4, 500, 10, separation=6.0, sigma=1.0, seed=0)


@pytest.fixture(scope="session")
def reference_config():
    return TrainConfig(seed=0)


@pytest.fixture(scope="session")
def reference_model(reference_blobs, reference_config):
    return prepare_shared_model(reference_blobs, 4, reference_config)
