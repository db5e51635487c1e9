import numpy as np
import pytest

from rmf import data, engine


@pytest.fixture(scope="session")
def tiny_spec():
    return data.SyntheticSpec(
        class_count=3, per_class_train=8, per_class_test=4,
        image_size=(12, 12, 3), noise_std=0.05, seed=101,
    )


@pytest.fixture(scope="session")
def tiny_data(tiny_spec):
    return data.generate_synthetic(tiny_spec)


@pytest.fixture(scope="session")
def desk_spec():
    return data.SyntheticSpec(seed=0)


@pytest.fixture(scope="session")
def desk_data(desk_spec):
    return data.generate_synthetic(desk_spec)


@pytest.fixture()
def tiny_model(tiny_data):
    train_ds, _ = tiny_data
    return engine.build_model(train_ds.class_count, train_ds.image_shape, seed=7)


def zeroed(model):
    """Zero all weights in place; logits become 0 so outputs turn uniform."""
    for layer_weights in model.weights:
        for w in layer_weights:
            w[:] = 0.0
    return model
